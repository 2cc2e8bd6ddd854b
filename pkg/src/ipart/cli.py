"""Command-line entry point: ``ipart {enumerate,prior-sim,fit,compare-priors}``.

Exit codes: 0 success, 2 validation error, 3 runtime or numerical error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .likelihood import DataError, read_dataset
from .partition import PartitionError, canonicalize, enumerate_partitions

log = logging.getLogger("ipart")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
PRESETS = Path(__file__).parent / "presets"


class UsageError(Exception):
    pass


def _build(fn, *args, **kw):
    """Run a config-to-model step; its ValueErrors are validation failures."""
    try:
        return fn(*args, **kw)
    except (DataError, PartitionError, FileNotFoundError):
        raise
    except ValueError as e:
        raise UsageError(str(e)) from None


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _meta(cfg) -> dict:
    return {"config": cfg.model_dump(mode="json"), "seed": cfg.seed,
            "versions": {"ipart": __version__, "numpy": np.__version__}}


# ------------------------------------------------------------------ enumerate

def cmd_enumerate(cfg, out: Path, threads: int) -> dict:
    from .priors import AlphaModel, CPPPrior, CRPPrior, ICRPPrior, LSPPrior

    m = cfg.m
    rho0 = canonicalize(cfg.rho0) if cfg.rho0 is not None else None
    parts = list(enumerate_partitions(m))
    columns, names = [], []
    if cfg.alpha_per_unit is not None:
        settings = [("alpha", np.asarray(row)) for row in cfg.alpha_per_unit]
    else:
        settings = [(None, g) for g in cfg.grid]
    for n, (_, g) in enumerate(settings):
        if cfg.prior == "icrp":
            am = AlphaModel("unit-local", 1, m, 1.0, 1.0, g, fixed=True)
            prior = ICRPPrior(rho0, am, cfg.M)
        elif cfg.prior == "cpp":
            prior = CPPPrior(rho0, g, cfg.M)
        elif cfg.prior == "lsp":
            prior = LSPPrior(rho0, g)
        else:
            prior = CRPPrior(g)
        columns.append(np.exp([prior.log_prob(p) for p in parts]))
        names.append(f"row{n + 1}" if cfg.alpha_per_unit is not None else f"{g:g}")
    probs = np.array(columns).T
    _write_rows(out / "enumeration.csv", ["partition", "k", *names],
                ([p.to_string(), p.k, *map(_fmt, row)] for p, row in zip(parts, probs)))
    # cumulative probability curve with partitions ordered by decreasing mass
    cum = np.cumsum(-np.sort(-probs, axis=0), axis=0)
    _write_rows(out / "cumulative.csv", ["rank", *names],
                ([r + 1, *map(_fmt, row)] for r, row in enumerate(cum)))
    summary = {
        "m": m, "n_partitions": len(parts), "prior": cfg.prior, "grid": names,
        "column_sums": probs.sum(axis=0).tolist(),
    }
    if rho0 is not None:
        j = parts.index(rho0)
        summary["prob_rho0"] = dict(zip(names, probs[j].tolist()))
    if cfg.prior == "lsp":
        summary["note"] = "nu decreases toward rho0 concentration; plot the nu axis reversed"
    meta = _meta(cfg)
    meta["summary"] = summary
    _write_json(out / "meta.json", meta)
    return summary


# ------------------------------------------------------------------ prior-sim

def cmd_prior_sim(cfg, out: Path, threads: int) -> dict:
    from .temporal import ari_traces, coclustering_tensor, simulate_many

    model = _build(cfg.build)
    labels, gammas = simulate_many(model, cfg.replicates, cfg.seed, threads)
    n, T, m = labels.shape
    _write_rows(out / "draws.csv", ["replicate", "t", "labels"],
                ([r + 1, t + 1, ",".join(map(str, labels[r, t].tolist()))] for r in range(n) for t in range(T)))
    _write_rows(out / "gammas.csv", ["replicate", "t", "gamma"],
                ([r + 1, t + 1, "".join(map(str, gammas[r, t].tolist()))] for r in range(n) for t in range(T)))
    cc = coclustering_tensor(labels)
    units = [f"u{i + 1}" for i in range(m)]
    for t in range(T):
        _write_rows(out / f"coclustering_t{t + 1}.csv", units, ([_fmt(v) for v in row] for row in cc[t]))
    lag, vs0 = ari_traces(labels, model.rho0)
    lag_mean = lag.mean(axis=0)
    _write_rows(out / "lagged_ari.csv", [f"t{t + 1}" for t in range(T)], ([_fmt(v) for v in row] for row in lag_mean))
    summary = {"replicates": n, "T": T, "m": m, "coclustering": cc.tolist(), "lagged_ari": lag_mean.tolist()}
    if vs0 is not None:
        mean = vs0.mean(axis=0)
        se = vs0.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(T)
        _write_rows(out / "ari_rho0.csv", ["t", "mean", "se"],
                    ([t + 1, _fmt(mean[t]), _fmt(se[t])] for t in range(T)))
        summary["ari_rho0_mean"] = mean.tolist()
        summary["ari_rho0_se"] = se.tolist()
    meta = _meta(cfg)
    _write_json(out / "meta.json", meta)
    _write_json(out / "summary.json", summary)
    return {k: summary[k] for k in ("replicates", "T", "m")}


# ------------------------------------------------------------------------ fit

def _load_data(cfg):
    from .synth import mixture_dataset, rho_true, spatial_panel

    d = cfg.data
    refs = {}
    if d.path is not None:
        try:
            data = read_dataset(cfg.resolve(d.path), d.format)
        except FileNotFoundError:
            raise DataError(f"data file not found: {cfg.resolve(d.path)}") from None
    else:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
        if d.generator == "mixture":
            data = mixture_dataset(d.h, rng, d.m, d.sd)
            refs["true"] = rho_true(d.m)
        else:
            data, regions = spatial_panel(rng, d.m, d.T, d.regions)
            refs["regions"] = regions
    return data, refs


def cmd_fit(cfg, out: Path, threads: int) -> dict:
    from .mcmc import fit
    from .summaries import write_report

    data, refs = _load_data(cfg)
    prior = _build(cfg.prior.build, T=data.T, m=data.m)
    for name, labels in cfg.references.items():
        if len(labels) != data.m:
            raise PartitionError(f"reference {name!r} covers {len(labels)} units but the data have {data.m}")
        refs[name] = canonicalize(labels)
    hp = _build(cfg.hyper.build)
    mcmc = _build(cfg.mcmc.build, cfg.seed)
    log.info("fitting %d x %d data with a %s prior", data.T, data.m, cfg.prior.type)
    arch = fit(data, prior, hp, mcmc, threads)
    arch.meta = {**arch.meta, **_meta(cfg)}
    arch.save(out / "archive")
    rho0 = canonicalize(cfg.prior.rho0) if cfg.prior.rho0 is not None else None
    report = write_report(arch, out, rho0, refs, seed=cfg.seed)
    _write_json(out / "meta.json", _meta(cfg))
    return {k: report[k] for k in ("draws", "lpml", "waic", "expected_ari")}


# ------------------------------------------------------------- compare-priors

def cmd_compare_priors(cfg, out: Path, threads: int) -> dict:
    from .synth import replicate_study, summarize_study

    priors = [(g.type, g.numeric(cfg.m)) for g in cfg.priors]
    mcmc, hp = _build(cfg.mcmc.build, cfg.seed), _build(cfg.hyper.build)
    rows = replicate_study(priors, cfg.rho0, cfg.h, cfg.replicates, mcmc, hp, cfg.seed, cfg.m, cfg.sd, threads)
    cols = ["prior", "value", "rho0", "h", "replicate", "ari_rho0", "ari_true", "ari_rho0_true", "lpml", "waic"]
    _write_rows(out / "replicates.csv", cols,
                ([r[c] if isinstance(r[c], (str, int)) else _fmt(r[c]) for c in cols] for r in rows))
    table = summarize_study(rows)
    tcols = list(table[0].keys())
    _write_rows(out / "comparison.csv", tcols,
                ([r[c] if isinstance(r[c], (str, int)) else _fmt(r[c]) for c in tcols] for r in table))
    _write_json(out / "meta.json", _meta(cfg))
    return {"cells": len(table), "fits": len(rows)}


COMMANDS = {
    "enumerate": (cmd_enumerate, "exact prior probabilities of every partition over a tuning grid"),
    "prior-sim": (cmd_prior_sim, "simulate partition sequences from the prior"),
    "fit": (cmd_fit, "run MCMC on a dataset and write the archive and summaries"),
    "compare-priors": (cmd_compare_priors, "replicated comparison of iCRP, CPP and LSP fits"),
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipart", description="Informed random partition models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", required=True, help="JSON config file, or preset:NAME for a bundled preset")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--out", default=f"ipart-{name}", help="output directory")
        s.add_argument("--threads", type=int, help="worker processes (default: IPART_THREADS or 1)")
        s.add_argument("--quiet", action="store_true", help="suppress progress messages")
    return p


def _threads(arg) -> int:
    if arg is not None:
        if arg < 1:
            raise UsageError("--threads must be at least 1")
        return arg
    env = os.environ.get("IPART_THREADS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"IPART_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise UsageError("IPART_THREADS must be at least 1")
    return n


def _config_path(spec: str) -> Path:
    if spec.startswith("preset:"):
        path = PRESETS / f"{spec[len('preset:'):]}.json"
        if not path.exists():
            names = sorted(q.stem for q in PRESETS.glob("*.json"))
            raise UsageError(f"unknown preset {spec!r}; available: {', '.join(names)}")
        return path
    return Path(spec)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="ipart: %(message)s", stream=sys.stderr)
    try:
        threads = _threads(args.threads)
        path = _config_path(args.config)
        try:
            payload = json.loads(path.read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
        if not isinstance(payload, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        if args.seed is not None:
            if args.seed < 0:
                raise UsageError("--seed must be nonnegative")
            payload["seed"] = args.seed
        try:
            cfg = load_config(args.command, payload, str(path.parent))
        except ValueError as e:  # includes pydantic validation errors
            raise UsageError(str(e)) from None
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command][0](cfg, out, threads)
    except (UsageError, DataError, PartitionError, FileNotFoundError) as e:
        print(f"ipart: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # numerical or other runtime failure
        print(f"ipart: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
