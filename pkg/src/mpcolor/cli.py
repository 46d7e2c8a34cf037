"""Command-line interface: generate | train | solve | bench | verify | serve.

A JSON config file (``--config``) supplies any setting; the flags below
override it. Commands exit 0 on success, 2 on configuration errors, 3 on
I/O failures, and 4 when training diverges.

``solve`` can run against a local checkpoint or act as a thin client for a
running service (``--server URL``); the other compute commands are local.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import brute_force, dsatur, welsh_powell
from .bench import (
    aggregate_rows,
    bench_corpus,
    evaluate_corpus,
    valid_variants,
)
from .gnn import GnnConfig, GnnModel, InferenceConfig
from .graph import (
    ConflictGraph,
    ContractError,
    anchor_violations,
    balance_stats,
    conflict_count,
    harden,
)
from .instances import (
    ParseError,
    export_coloring,
    generate_corpus,
    generate_planted,
    import_coloring,
    import_edgelist,
    load_corpus,
    parse_dimacs,
)
from .ioutil import atomic_write_text
from .nn import CheckpointError
from .refine import PipelineConfig, SaConfig, csp_repair, gnn_heuristic_refine, sa_balance
from .training import (
    LossConfig,
    TrainConfig,
    TrainingDiverged,
    train,
    train_two_stage,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

SOLVE_STAGES = {
    "full": "full",
    "csp": "full",
    "heuristic-only": "heuristic",
    "heuristic": "heuristic",
    "inference-only": "inference",
    "inference": "inference",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpcolor", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--passes", type=int, default=None, help="inference forward passes")
        p.add_argument("--stage", default=None)
        p.add_argument("--jobs", type=int, default=None, help="worker processes")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("generate", help="write a synthetic planted corpus")
    common(p)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--density", type=float, default=None)
    p.add_argument("--n-min", type=int, default=None)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--uncolorable-fraction", type=float, default=None)

    p = sub.add_parser("train", help="train a model on a corpus or a single instance")
    common(p)
    p.add_argument("--corpus", default=None, help="corpus manifest path")
    p.add_argument("--instance", default=None, help="train on one instance file instead")
    p.add_argument("--model-out", default=None, help="checkpoint path to write")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--scheme", default=None)
    p.add_argument("--resume", action="store_true", default=None,
                   help="continue from an existing checkpoint")

    p = sub.add_parser("solve", help="color instances with the full pipeline")
    common(p)
    p.add_argument("--corpus", default=None)
    p.add_argument("--instance", default=None, help="single instance file")
    p.add_argument("--model", default=None, help="checkpoint path")
    p.add_argument("--server", default=None, help="service URL; solve remotely")
    p.add_argument("--csp-budget", type=float, default=None)
    p.add_argument("--no-sa", action="store_true", default=None)

    p = sub.add_parser("bench", help="run the variant grid over a corpus")
    common(p)
    p.add_argument("--corpus", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--variants", default=None, help="comma-separated variant names")
    p.add_argument("--pass-sweep", default=None, help="comma-separated pass counts")
    p.add_argument("--csp-budget", type=float, default=None)

    p = sub.add_parser("verify", help="check a coloring, or self-check against the oracle")
    common(p)
    p.add_argument("--instance", default=None)
    p.add_argument("--coloring", default=None)
    p.add_argument("--count", type=int, default=None, help="self-check instance count")
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--density", type=float, default=None)

    p = sub.add_parser("serve", help="run the HTTP service")
    common(p)
    p.add_argument("--model", default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)

    return parser


def _merge_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ContractError(f"config file not found: {path}")
        try:
            cfg = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ContractError(f"config is not valid JSON: {exc}")
        if not isinstance(cfg, dict):
            raise ContractError("config root must be a JSON object")
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        cfg[key] = value
    return cfg


def _require(cfg: dict, key: str, flag: str):
    value = cfg.get(key)
    if value is None:
        raise ContractError(f"missing required setting {key!r} (use {flag} or the config file)")
    return value


def _out_dir(cfg: dict, default: str = ".") -> Path:
    out = Path(cfg.get("out") or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_run_config(cfg: dict, out: Path, command: str) -> None:
    doc = {"command": command, **{k: v for k, v in sorted(cfg.items()) if v is not None}}
    atomic_write_text(out / "run_config.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_instances(cfg: dict) -> list[tuple[str, ConflictGraph]]:
    if cfg.get("corpus"):
        manifest_path = Path(cfg["corpus"])
        if not manifest_path.exists():
            raise ContractError(f"corpus manifest not found: {manifest_path}")
        manifest, graphs = load_corpus(manifest_path)
        return [(Path(e.path).stem, g) for e, g in zip(manifest.entries, graphs)]
    if cfg.get("instance"):
        path = Path(cfg["instance"])
        if not path.exists():
            raise ContractError(f"instance file not found: {path}")
        text = path.read_text(encoding="utf-8")
        if path.suffix in (".col", ".dimacs") or text.lstrip().startswith(("c", "p ")):
            k = cfg.get("k")
            if k is None:
                raise ContractError("DIMACS input needs --k (the format carries no color count)")
            g = parse_dimacs(text, k)
        else:
            g = import_edgelist(text)
        return [(path.stem, g)]
    raise ContractError("need --corpus or --instance")


def _load_model(cfg: dict) -> tuple[GnnModel, str]:
    path = _require(cfg, "model", "--model")
    if not Path(path).exists():
        raise ContractError(f"model checkpoint not found: {path}")
    model, _ = GnnModel.load(path)
    return model, str(path)


def _pipeline_config(cfg: dict) -> PipelineConfig:
    passes = cfg.get("passes", 10)
    return PipelineConfig(
        inference=InferenceConfig(forward_passes=passes),
        csp_budget=cfg.get("csp_budget", 10.0),
        csp_objective=cfg.get("csp_objective", "count"),
        resort=cfg.get("resort", "always"),
        sa=SaConfig(iterations=cfg.get("sa_iterations")),
    )


# ---------------------------------------------------------------------------
# Commands

def cmd_generate(cfg: dict) -> int:
    out = _out_dir(cfg, "corpus")
    manifest = generate_corpus(
        out_dir=out,
        count=cfg.get("count", 200),
        n_range=(cfg.get("n_min", 20), cfg.get("n_max", 200)),
        k=cfg.get("k", 3),
        density=cfg.get("density", 0.3),
        seed=cfg.get("seed", 42),
        uncolorable_fraction=cfg.get("uncolorable_fraction", 0.0),
    )
    _dump_run_config(cfg, out, "generate")
    print(f"wrote {len(manifest.entries)} instances to {out}/manifest.json")
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    if cfg.get("corpus") and cfg.get("instance"):
        raise ContractError("train takes --corpus or --instance, not both")
    corpus_seed = None
    if cfg.get("instance"):
        graphs = [g for _, g in _load_instances(cfg)]
        corpus_k = graphs[0].k
    else:
        manifest_path = Path(_require(cfg, "corpus", "--corpus"))
        if not manifest_path.exists():
            raise ContractError(f"corpus manifest not found: {manifest_path}")
        manifest, graphs = load_corpus(manifest_path)
        corpus_k = manifest.k
        corpus_seed = manifest.seed
    if cfg.get("k") is not None and cfg["k"] != corpus_k:
        raise ContractError(f"--k {cfg['k']} contradicts corpus k={corpus_k}")

    out = _out_dir(cfg)
    model_out = Path(cfg.get("model_out") or out / "model.json")
    seed = cfg.get("seed", 0)

    lc = LossConfig.from_dict(cfg.get("loss", {}))
    tc_dict = dict(cfg.get("train", {}))
    for key in ("epochs", "scheme", "passes"):
        if cfg.get(key) is not None:
            tc_dict[key] = cfg[key]
    tc_dict.setdefault("seed", seed)
    stage = cfg.get("stage", "both")
    if stage in ("joint_init", "fine_tune"):
        tc_dict["stage"] = stage
    tc = TrainConfig.from_dict(tc_dict)

    epoch_offset = 0
    if cfg.get("resume"):
        if not model_out.exists():
            raise ContractError(f"cannot resume: checkpoint not found: {model_out}")
        model, meta = GnnModel.load(model_out)
        if model.cfg.k != corpus_k:
            raise ContractError(f"checkpoint k={model.cfg.k} contradicts corpus k={corpus_k}")
        epoch_offset = int(meta.get("epochs_trained", 0))
    else:
        model = GnnModel(GnnConfig(k=corpus_k), seed=seed)

    if stage == "both":
        result = train_two_stage(model, graphs, lc, tc)
    else:
        result = train(model, graphs, lc, tc)

    for i, row in enumerate(result.history):
        row["epoch"] = epoch_offset + i

    meta = {
        "epochs_trained": epoch_offset + len(result.history),
        "stage": stage,
        "final_beta": result.final_beta,
        "loss_config": asdict(lc),
        "train_config": asdict(tc),
        "corpus_seed": corpus_seed,
    }
    model.save(model_out, meta=meta)

    history_path = out / "history.csv"
    csv_text = result.to_csv()
    if cfg.get("resume") and history_path.exists():
        previous = history_path.read_text(encoding="utf-8")
        body = csv_text.split("\n", 1)[1] if "\n" in csv_text else ""
        atomic_write_text(history_path, previous + body)
    else:
        atomic_write_text(history_path, csv_text)
    _dump_run_config(cfg, out, "train")

    last = result.history[-1]
    print(f"trained {len(result.history)} epochs -> {model_out}")
    print(f"final l1={last['l1']:.6f} l2={last['l2']:.6f} beta={last['beta']:.4f}")
    return EXIT_OK


def _solve_remote(cfg: dict, graphs: list[tuple[str, ConflictGraph]]) -> list[tuple[str, np.ndarray, dict]]:
    import httpx

    base = cfg["server"].rstrip("/")
    passes = cfg.get("passes", 10)
    seed = cfg.get("seed", 0)
    stage = SOLVE_STAGES.get(cfg.get("stage") or "full")
    if stage is None:
        raise ContractError(f"unknown solve stage {cfg.get('stage')!r}")
    results = []
    with httpx.Client(base_url=base, timeout=300.0) as client:
        for gid, g in graphs:
            payload = {
                "graph": {
                    "node_count": g.node_count,
                    "k": g.k,
                    "edges": [list(e) for e in g.edges],
                    "anchors": [list(a) for a in g.anchors],
                },
                "passes": passes,
                "seed": seed,
                "stage": "csp" if stage == "full" else stage,
                "run_sa": not cfg.get("no_sa"),
            }
            resp = client.post("/solve", json=payload)
            if resp.status_code != 200:
                raise ContractError(f"server rejected {gid}: {resp.status_code} {resp.text}")
            doc = resp.json()
            row = {
                "graph": gid,
                "n": g.node_count,
                "m": g.edge_count,
                "variant": "server",
                "stage": doc["stage"],
                "conflicts": doc["conflicts"],
                "max_spread": doc["max_spread"],
                "squared_deviation": balance_stats(g, np.asarray(doc["coloring"])).squared_deviation,
                "uncolorable": doc["uncolorable"],
                "time_total": doc["report"].get("times", {}).get("total", 0.0),
            }
            results.append((gid, np.asarray(doc["coloring"], dtype=np.int64), row))
    return results


def cmd_solve(cfg: dict) -> int:
    graphs = _load_instances(cfg)
    out = _out_dir(cfg, "solve-out")
    seed = cfg.get("seed", 0)

    if cfg.get("server"):
        results = _solve_remote(cfg, graphs)
        colorings = [c for _, c, _ in results]
        rows = [r for _, _, r in results]
    else:
        stage = SOLVE_STAGES.get(cfg.get("stage") or "full")
        if stage is None:
            raise ContractError(
                f"unknown solve stage {cfg.get('stage')!r}; expected one of {sorted(set(SOLVE_STAGES))}"
            )
        variant = stage if cfg.get("no_sa") else f"{stage}+sa"
        model, model_path = _load_model(cfg)
        pcfg = _pipeline_config(cfg)
        colorings, rows = evaluate_corpus(
            graphs, variant, pcfg, seed,
            model=model, model_path=model_path, jobs=cfg.get("jobs", 1),
        )

    for (gid, _), coloring in zip(graphs, colorings):
        atomic_write_text(out / f"{gid}.colors", export_coloring(coloring))
    report = {"rows": rows, "aggregate": aggregate_rows(rows)}
    atomic_write_text(out / "solve_report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    _dump_run_config(cfg, out, "solve")

    agg = report["aggregate"]
    print(f"solved {agg['count']} instances: {agg['solve_pct']:.2f}% conflict-free, "
          f"mean max_spread {agg['mean_max_spread']:.3f}")
    return EXIT_OK


def cmd_bench(cfg: dict) -> int:
    graphs = _load_instances(cfg)
    out = _out_dir(cfg, "bench-out")
    seed = cfg.get("seed", 0)

    variants = cfg.get("variants") or list(valid_variants())
    if isinstance(variants, str):
        variants = [v.strip() for v in variants.split(",") if v.strip()]
    sweep = cfg.get("pass_sweep")
    if isinstance(sweep, str):
        sweep = [int(x) for x in sweep.split(",") if x.strip()]
    if sweep is None:
        sweep = [1, 2, 3, 5, 10]

    needs_model = any(v not in ("dsatur", "welsh_powell") for v in variants) or bool(sweep)
    model = model_path = None
    if needs_model:
        model, model_path = _load_model(cfg)

    report = bench_corpus(
        graphs, variants, _pipeline_config(cfg), seed,
        model=model, model_path=model_path, jobs=cfg.get("jobs", 1), pass_sweep=sweep,
    )
    atomic_write_text(out / "bench_rows.csv", report.rows_csv())
    atomic_write_text(out / "bench_aggregates.csv", report.aggregates_csv())
    if report.sweep:
        atomic_write_text(out / "bench_sweep.csv", report.sweep_csv())
    atomic_write_text(out / "bench.json", report.to_json() + "\n")
    _dump_run_config(cfg, out, "bench")

    for name in variants:
        agg = report.aggregates[name]
        print(f"{name:16s} solve {agg['solve_pct']:6.2f}%  "
              f"spread {agg['mean_max_spread']:.3f} +- {agg['std_max_spread']:.3f}")
    for row in report.sweep:
        print(f"passes {row['passes']:3d}  solve {row['solve_pct']:6.2f}%")
    return EXIT_OK


def _verify_solution(cfg: dict) -> int:
    graphs = _load_instances(cfg)
    gid, g = graphs[0]
    coloring_path = Path(cfg["coloring"])
    if not coloring_path.exists():
        raise ContractError(f"coloring file not found: {coloring_path}")
    colors = import_coloring(coloring_path.read_text(encoding="utf-8"), g.node_count)
    conflicts = conflict_count(g, colors)
    anchors_bad = anchor_violations(g, colors)
    stats = balance_stats(g, colors)
    print(f"{gid}: conflicts={conflicts} anchor_violations={anchors_bad} "
          f"max_spread={stats.max_spread} counts={list(stats.counts)}")
    return EXIT_OK if conflicts == 0 and anchors_bad == 0 else 1


def _verify_selfcheck(cfg: dict) -> int:
    count = cfg.get("count", 30)
    n_max = cfg.get("n_max", 10)
    k = cfg.get("k", 3)
    density = cfg.get("density", 0.3)
    seed = cfg.get("seed", 0)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
    failures = 0

    def check(name: str, ok: bool) -> None:
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures += 1

    feas_agree = baseline_bound = heuristic_bound = sa_safe = witness_ok = True
    for i in range(count):
        n = int(rng.integers(k + 1, n_max + 1))
        g, witness = generate_planted(n, k, density, (seed, i))
        if conflict_count(g, witness) != 0:
            witness_ok = False
        bf = brute_force(g, mode="min_conflicts")
        csp = csp_repair(g, harden(np.full((n, k), 1.0 / k)), time_budget=30.0)
        if (csp.status == "feasible") != (bf.conflicts == 0):
            feas_agree = False
        for res in (dsatur(g), welsh_powell(g)):
            if res.conflicts_at_k < bf.conflicts:
                baseline_bound = False
        refined = gnn_heuristic_refine(g, np.full((n, k), 1.0 / k))
        if conflict_count(g, refined) < bf.conflicts:
            heuristic_bound = False
        balanced = sa_balance(g, witness, SaConfig(seed=(seed, i)))
        if conflict_count(g, balanced) != 0 or (
            balance_stats(g, balanced).max_spread > balance_stats(g, witness).max_spread
        ):
            sa_safe = False

    check("planted witnesses are conflict-free", witness_ok)
    check("csp feasibility matches brute force", feas_agree)
    check("baselines never beat the exhaustive minimum", baseline_bound)
    check("heuristic refinement never beats the exhaustive minimum", heuristic_bound)
    check("sa_balance preserves feasibility and never worsens spread", sa_safe)

    print(f"{5 - failures}/5 checks passed on {count} instances")
    return EXIT_OK if failures == 0 else 1


def cmd_verify(cfg: dict) -> int:
    if cfg.get("coloring"):
        return _verify_solution(cfg)
    return _verify_selfcheck(cfg)


def cmd_serve(cfg: dict) -> int:
    import uvicorn

    from .service import create_app

    checkpoint = cfg.get("model")
    if checkpoint and not Path(checkpoint).exists():
        raise ContractError(f"model checkpoint not found: {checkpoint}")
    app = create_app(checkpoint=checkpoint)
    uvicorn.run(app, host=cfg.get("host", "127.0.0.1"), port=cfg.get("port", 8000))
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "verify": cmd_verify,
    "serve": cmd_serve,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        return _COMMANDS[args.command](cfg)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ContractError, ParseError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
