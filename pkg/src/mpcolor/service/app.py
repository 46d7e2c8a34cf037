"""HTTP front end over the solve path.

The service loads one model checkpoint at startup and serves solve requests
against it; generation, baselines, and verification need no model. Domain
precondition failures surface as 422 responses, solving without a loaded
model as 503.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from ..baselines import dsatur, welsh_powell
from ..gnn import GnnModel, InferenceConfig
from ..graph import (
    ContractError,
    anchor_violations,
    balance_stats,
    conflict_count,
    hard_bound_satisfied,
    total_violations,
)
from ..instances import generate_planted, generate_uncolorable
from ..refine import PipelineConfig, SaConfig, full_pipeline
from . import schemas


def create_app(model: GnnModel | None = None, checkpoint: str | Path | None = None) -> FastAPI:
    if model is None and checkpoint is not None:
        model, _ = GnnModel.load(checkpoint)

    app = FastAPI(title="mpcolor", description="Balanced fixed-k conflict-graph coloring")

    @app.exception_handler(ContractError)
    async def _contract_error(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(
            status="ok",
            model_loaded=model is not None,
            model_k=model.cfg.k if model is not None else None,
        )

    @app.post("/solve", response_model=schemas.SolveResponse)
    def solve(req: schemas.SolveRequest) -> schemas.SolveResponse:
        if model is None:
            raise HTTPException(status_code=503, detail="no model checkpoint loaded")
        g = req.graph.to_graph()
        cfg = PipelineConfig(
            inference=InferenceConfig(forward_passes=req.passes, init_seed=(req.seed, 0)),
            sa=SaConfig(seed=(req.seed, 1)),
            run_sa=req.run_sa,
            max_stage=req.stage,
        )
        coloring, report = full_pipeline(g, model, cfg)
        stats = balance_stats(g, coloring)
        return schemas.SolveResponse(
            coloring=[int(c) for c in coloring],
            conflicts=conflict_count(g, coloring),
            max_spread=stats.max_spread,
            stage=report["stage"],
            uncolorable=report["uncolorable"],
            report=report,
        )

    @app.post("/baseline", response_model=schemas.BaselineResponse)
    def baseline(req: schemas.BaselineRequest) -> schemas.BaselineResponse:
        g = req.graph.to_graph()
        if req.algorithm == "dsatur":
            res = dsatur(g)
        elif req.algorithm == "welsh_powell":
            res = welsh_powell(g)
        else:
            raise HTTPException(
                status_code=422,
                detail=f"unknown algorithm {req.algorithm!r}; expected dsatur or welsh_powell",
            )
        return schemas.BaselineResponse(
            coloring=[int(c) for c in res.coloring],
            colors_used=res.colors_used,
            conflicts=res.conflicts_at_k,
            max_spread=res.stats.max_spread,
        )

    @app.post("/generate", response_model=schemas.GenerateResponse)
    def generate(req: schemas.GenerateRequest) -> schemas.GenerateResponse:
        if req.uncolorable:
            g = generate_uncolorable(req.n, req.k, req.density, req.seed)
            witness = None
        else:
            g, w = generate_planted(req.n, req.k, req.density, req.seed)
            witness = [int(c) for c in w]
        return schemas.GenerateResponse(graph=schemas.GraphSpec.from_graph(g), witness=witness)

    @app.post("/verify", response_model=schemas.VerifyResponse)
    def verify(req: schemas.VerifyRequest) -> schemas.VerifyResponse:
        g = req.graph.to_graph()
        colors = np.asarray(req.coloring, dtype=np.int64)
        stats = balance_stats(g, colors)
        return schemas.VerifyResponse(
            conflicts=conflict_count(g, colors),
            anchor_violations=anchor_violations(g, colors),
            counts=list(stats.counts),
            max_spread=stats.max_spread,
            squared_deviation=stats.squared_deviation,
            total_violations=total_violations(g, colors, delta=req.delta),
            within_delta=hard_bound_satisfied(stats, req.delta),
        )

    return app
