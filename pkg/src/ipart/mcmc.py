"""Posterior sampling for informed partition models and the CPP/LSP comparison priors.

One sweep updates, in order: free allocations (auxiliary-component Gibbs with
compatibility enforced as zero weight), reallocation indicators, alpha
(beta-binomial), then cluster parameters. Labels are compacted and
re-canonicalized at the end of every sweep.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import __version__
from .likelihood import ClusterParams, Dataset, Hyperparams
from .partition import Partition, PartitionError, canonicalize, is_compatible
from .priors import AlphaModel, CPPPrior, CRPPrior, ICRPPrior, LSPPrior, crp_sample
from .temporal import PartitionSequence, SequenceModel


@dataclass
class McmcConfig:
    iters: int = 11000
    burnin: int = 1000
    thin: int = 10
    n_aux: int = 3
    seed: int = 0
    chains: int = 1

    def __post_init__(self):
        for name in ("iters", "thin", "n_aux", "chains"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.burnin < 0 or self.burnin >= self.iters:
            raise ValueError("burnin must lie in [0, iters)")
        if (self.iters - self.burnin) % self.thin:
            raise ValueError("thin must divide iters - burnin")

    @property
    def n_draws(self) -> int:
        return (self.iters - self.burnin) // self.thin


# ---------------------------------------------------------------- problem setup

@dataclass
class _Problem:
    y: np.ndarray
    icfg: np.ndarray
    fcfg: np.ndarray
    c0: np.ndarray
    blk: np.ndarray
    alpha: AlphaModel
    prior: object
    model: SequenceModel | None


def _hp_config(data: Dataset, hp: Hyperparams, n_aux: int):
    icfg = np.zeros(13, dtype=np.int64)
    fcfg = np.zeros(11, dtype=np.float64)
    icfg[K.I_T], icfg[K.I_M], icfg[K.I_CAP], icfg[K.I_NAUX] = data.T, data.m, data.m + n_aux + 1, n_aux
    icfg[K.I_FLAT] = hp.likelihood == "flat"
    icfg[K.I_SIGFIX] = hp.sigma is not None
    icfg[K.I_THFIX] = hp.theta is not None
    icfg[K.I_TAUFIX] = hp.tau2 is not None
    fcfg[K.F_ASIG] = hp.sigma * 2.0 if hp.sigma is not None else hp.resolved_A_sigma(data)
    fcfg[K.F_ATAU], fcfg[K.F_ALAM] = hp.A_tau, hp.A_lambda
    fcfg[K.F_M0], fcfg[K.F_S02] = hp.m0, hp.s02
    fcfg[K.F_SIG] = hp.sigma or 0.0
    fcfg[K.F_THETA] = hp.theta if hp.theta is not None else 0.0
    fcfg[K.F_TAU] = np.sqrt(hp.tau2) if hp.tau2 is not None else 0.0
    return icfg, fcfg


def _problem(data: Dataset, prior, hp: Hyperparams, n_aux: int) -> _Problem:
    icfg, fcfg = _hp_config(data, hp, n_aux)
    model = None
    if isinstance(prior, SequenceModel):
        model = prior
        if model.T != data.T or model.m != data.m:
            raise PartitionError(f"model is sized {model.T}x{model.m} but data is {data.T}x{data.m}")
        icfg[K.I_PRIOR] = K.PRIOR_ICRP
        icfg[K.I_MARKOV] = model.markovian
        icfg[K.I_INFORMED] = model.informed
        fcfg[K.F_M] = model.M
        alpha = model.alpha
        rho0 = model.rho0
    else:
        if data.T != 1:
            raise PartitionError("CPP and LSP priors are defined for a single time point")
        alpha = AlphaModel.constant(0.0, 1, data.m)
        rho0 = getattr(prior, "rho0", None)
        if isinstance(prior, CRPPrior):
            icfg[K.I_PRIOR] = K.PRIOR_ICRP
            fcfg[K.F_M] = prior.M
        elif isinstance(prior, ICRPPrior):
            return _problem(data, SequenceModel("markovian", prior.rho0, prior.alpha, prior.M), hp, n_aux)
        elif isinstance(prior, CPPPrior):
            icfg[K.I_PRIOR] = K.PRIOR_CPP
            fcfg[K.F_M], fcfg[K.F_PSI] = prior.M, prior.psi
        elif isinstance(prior, LSPPrior):
            icfg[K.I_PRIOR] = K.PRIOR_LSP
            fcfg[K.F_NU] = prior.nu
            fcfg[K.F_M] = 1.0
        else:
            raise TypeError(f"unsupported prior {type(prior).__name__}")
    if rho0 is not None and rho0.m != data.m:
        raise PartitionError(f"rho0 covers {rho0.m} units but data has {data.m}")
    icfg[K.I_AFIXED] = alpha.fixed
    icfg[K.I_NB] = alpha.n_blocks
    c0 = rho0.as_array() - 1 if rho0 is not None else np.zeros(data.m, dtype=np.int64)
    return _Problem(data.y, icfg, fcfg, c0, alpha.block_index(), alpha, prior, model)


# ------------------------------------------------------------------ chain state

@dataclass
class ChainState:
    lab: np.ndarray  # T x m, 0-based
    k: np.ndarray
    cnt: np.ndarray
    mu: np.ndarray
    sig: np.ndarray
    gam: np.ndarray
    theta: np.ndarray
    tau: np.ndarray
    glob: np.ndarray  # (phi0, lambda)
    alpha: np.ndarray  # per tied block
    ct: np.ndarray  # contingency with rho0 (CPP only)
    iteration: int = 0

    @property
    def seq(self) -> PartitionSequence:
        return PartitionSequence(tuple(canonicalize(row) for row in self.lab))

    @property
    def params(self) -> ClusterParams:
        return _unpack_params(self.k, self.mu, self.sig, self.theta, self.tau, self.glob)

    def copy(self) -> "ChainState":
        return ChainState(**{f: (v.copy() if isinstance(v, np.ndarray) else v) for f, v in self.__dict__.items()})


def _pack_params(lab, params: ClusterParams, cap: int):
    T, m = lab.shape
    k = np.array([row.max() + 1 for row in lab], dtype=np.int64)
    cnt = np.zeros((T, cap), dtype=np.int64)
    mu = np.zeros((T, cap))
    sig = np.ones((T, cap))
    for t in range(T):
        cnt[t, : k[t]] = np.bincount(lab[t], minlength=k[t])
        mu[t, : k[t]] = params.mu[t][: k[t]]
        sig[t, : k[t]] = params.sigma[t][: k[t]]
    glob = np.array([params.phi0, params.lam], dtype=np.float64)
    return k, cnt, mu, sig, np.array(params.theta, dtype=np.float64), np.array(params.tau, dtype=np.float64), glob


def _unpack_params(k, mu, sig, theta, tau, glob) -> ClusterParams:
    return ClusterParams(
        mu=[mu[t, : k[t]].copy() for t in range(len(k))],
        sigma=[sig[t, : k[t]].copy() for t in range(len(k))],
        theta=theta.copy(), tau=tau.copy(), phi0=float(glob[0]), lam=float(glob[1]),
    )


def initial_state(data: Dataset, prior, hp: Hyperparams, n_aux: int, rng: np.random.Generator) -> ChainState:
    """Start at the initial partition (or a CRP draw without one) with gamma ~ Bern(alpha)."""
    pb = _problem(data, prior, hp, n_aux)
    T, m = data.T, data.m
    cap = int(pb.icfg[K.I_CAP])
    if pb.model is not None and pb.model.informed:
        base = pb.model.rho0.as_array() - 1
    elif isinstance(prior, (CPPPrior, LSPPrior)):
        base = prior.rho0.as_array() - 1
    else:
        base = crp_sample(m, float(pb.fcfg[K.F_M]), rng).as_array() - 1
    lab = np.tile(base, (T, 1)).astype(np.int64)
    alpha = pb.alpha.values.astype(np.float64).copy()
    gam = np.zeros((T, m), dtype=np.int64)
    if pb.model is not None:
        amat = alpha[pb.blk]
        mask = pb.model.gamma_mask()
        gam[mask] = (rng.random((T, m)) < amat)[mask]
    flat = hp.likelihood == "flat"
    A_sig = float(pb.fcfg[K.F_ASIG])
    k = np.array([row.max() + 1 for row in lab], dtype=np.int64)
    cnt = np.zeros((T, cap), dtype=np.int64)
    mu = np.zeros((T, cap))
    sig = np.full((T, cap), hp.sigma if hp.sigma is not None else A_sig / 2.0)
    theta = np.empty(T)
    tau = np.empty(T)
    for t in range(T):
        cnt[t, : k[t]] = np.bincount(lab[t], minlength=k[t])
        if flat:
            mu[t, : k[t]] = hp.m0
        else:
            mu[t, : k[t]] = np.bincount(lab[t], weights=data.y[t], minlength=k[t]) / cnt[t, : k[t]]
        theta[t] = hp.theta if hp.theta is not None else (hp.m0 if flat else data.y[t].mean())
        if hp.tau2 is not None:
            tau[t] = np.sqrt(hp.tau2)
        else:
            sd = 1.0 if flat or m < 2 else float(np.std(data.y[t], ddof=1))
            tau[t] = min(max(sd, 1e-3), 0.5 * hp.A_tau)
    glob = np.array([theta.mean(), 0.5 * hp.A_lambda])
    ct = np.zeros((cap, int(pb.c0.max()) + 1), dtype=np.int64)
    if pb.icfg[K.I_PRIOR] == K.PRIOR_CPP:
        np.add.at(ct, (lab[0], pb.c0), 1)
    return ChainState(lab, k, cnt, mu, sig, gam, theta, tau, glob, alpha, ct)


def _seed_from(rng: np.random.Generator) -> None:
    K.seed(int(rng.integers(2 ** 31 - 1)))


def update_allocations(state: ChainState, data: Dataset, model, hp: Hyperparams,
                       rng: np.random.Generator, n_aux: int = 3) -> ChainState:
    pb = _problem(data, model, hp, n_aux)
    s = state.copy()
    _ensure_capacity(s, int(pb.icfg[K.I_CAP]))
    _seed_from(rng)
    K.alloc_pass(pb.y, s.lab, s.k, s.cnt, s.mu, s.sig, s.gam, s.theta, s.tau, pb.c0, s.ct, pb.icfg, pb.fcfg)
    K.canon_pass(s.lab, s.k, s.cnt, s.mu, s.sig, s.ct, pb.icfg[K.I_PRIOR] == K.PRIOR_CPP)
    return s


def update_gammas(state: ChainState, model, rng: np.random.Generator, data: Dataset | None = None) -> ChainState:
    T, m = state.lab.shape
    data = data or Dataset(np.zeros((T, m)))
    pb = _problem(data, model, Hyperparams(A_sigma=1.0), 1)
    s = state.copy()
    if pb.icfg[K.I_PRIOR] == K.PRIOR_ICRP:
        _seed_from(rng)
        K.gamma_pass(s.lab, s.gam, pb.c0, s.alpha, pb.blk, pb.icfg, pb.fcfg)
    return s


def _ensure_capacity(s: ChainState, cap: int) -> None:
    if s.cnt.shape[1] >= cap:
        return
    pad = cap - s.cnt.shape[1]
    s.cnt = np.pad(s.cnt, ((0, 0), (0, pad)))
    s.mu = np.pad(s.mu, ((0, 0), (0, pad)))
    s.sig = np.pad(s.sig, ((0, 0), (0, pad)), constant_values=1.0)
    s.ct = np.pad(s.ct, ((0, pad), (0, 0)))


def check_invariants(state: ChainState, model) -> None:
    """Raise AssertionError if any slice breaks compatibility with its center or the bookkeeping."""
    T, m = state.lab.shape
    for t in range(T):
        assert np.array_equal(np.bincount(state.lab[t], minlength=state.k[t])[: state.k[t]], state.cnt[t, : state.k[t]])
        assert state.lab[t].max() + 1 == state.k[t]
    if isinstance(model, SequenceModel):
        mask = model.gamma_mask()
        for t in range(T):
            if not mask[t].any():
                assert not state.gam[t].any()
                continue
            center = state.lab[t - 1] if (model.markovian and t > 0) else model.rho0.as_array()
            assert is_compatible(canonicalize(state.lab[t]), canonicalize(center), state.gam[t]), f"slice {t} incompatible"


def debug_sweeps(data: Dataset, prior, hp: Hyperparams, n_sweeps: int, seed: int = 0,
                 n_aux: int = 3) -> ChainState:
    """Run sweeps pass by pass, asserting the state invariants after every pass."""
    rng = np.random.default_rng(seed)
    s = initial_state(data, prior, hp, n_aux, rng)
    pb = _problem(data, prior, hp, n_aux)
    use_ct = pb.icfg[K.I_PRIOR] == K.PRIOR_CPP
    model = pb.model
    _seed_from(rng)
    check_invariants(s, model)
    for it in range(n_sweeps):
        K.alloc_pass(pb.y, s.lab, s.k, s.cnt, s.mu, s.sig, s.gam, s.theta, s.tau, pb.c0, s.ct, pb.icfg, pb.fcfg)
        check_invariants(s, model)
        if pb.icfg[K.I_PRIOR] == K.PRIOR_ICRP:
            K.gamma_pass(s.lab, s.gam, pb.c0, s.alpha, pb.blk, pb.icfg, pb.fcfg)
            check_invariants(s, model)
            if not pb.icfg[K.I_AFIXED]:
                K.alpha_pass(s.gam, s.alpha, pb.blk, pb.alpha.a, pb.alpha.b, pb.icfg)
        K.param_pass(pb.y, s.lab, s.k, s.cnt, s.mu, s.sig, s.theta, s.tau, s.glob, pb.icfg, pb.fcfg)
        K.canon_pass(s.lab, s.k, s.cnt, s.mu, s.sig, s.ct, use_ct)
        check_invariants(s, model)
        assert np.all(s.sig[s.cnt > 0] > 0) and np.all(s.tau > 0)
        s.iteration = it + 1
    return s


# ---------------------------------------------------------------------- archive

@dataclass
class DrawsArchive:
    labels: np.ndarray  # B x T x m, canonical 1-based
    alpha: np.ndarray  # B x n_blocks
    alpha_names: list[str]
    loglik: np.ndarray  # B x T x m pointwise log-likelihood
    logpost: np.ndarray  # B
    n_fixed: np.ndarray  # B x T count of gamma = 1
    iteration: np.ndarray  # B
    chain: np.ndarray  # B
    meta: dict = field(default_factory=dict)

    @property
    def B(self) -> int:
        return self.labels.shape[0]

    @property
    def T(self) -> int:
        return self.labels.shape[1]

    @property
    def m(self) -> int:
        return self.labels.shape[2]

    def partitions(self, t: int = 0) -> list[Partition]:
        return [Partition(tuple(row)) for row in self.labels[:, t, :].tolist()]

    def save(self, out: str | Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "draws.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain", "iteration", "t", "labels"])
            for b in range(self.B):
                for t in range(self.T):
                    w.writerow([int(self.chain[b]), int(self.iteration[b]), t + 1,
                                ",".join(map(str, self.labels[b, t].tolist()))])
        with open(out / "alpha.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain", "iteration", *self.alpha_names])
            for b in range(self.B):
                w.writerow([int(self.chain[b]), int(self.iteration[b]), *(repr(float(v)) for v in self.alpha[b])])
        with open(out / "loglik.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain", "iteration", "logpost", "n_fixed",
                        *(f"t{t + 1}_i{i + 1}" for t in range(self.T) for i in range(self.m))])
            for b in range(self.B):
                w.writerow([int(self.chain[b]), int(self.iteration[b]), repr(float(self.logpost[b])),
                            ";".join(map(str, self.n_fixed[b].tolist())),
                            *(repr(float(v)) for v in self.loglik[b].ravel())])
        with open(out / "meta.json", "w") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "DrawsArchive":
        path = Path(path)
        meta = json.loads((path / "meta.json").read_text())
        with open(path / "draws.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        T = max(int(r["t"]) for r in rows)
        labels = np.array([[int(x) for x in r["labels"].split(",")] for r in rows], dtype=np.int64)
        B = len(rows) // T
        labels = labels.reshape(B, T, -1)
        with open(path / "alpha.csv", newline="") as fh:
            reader = csv.reader(fh)
            head = next(reader)
            arows = list(reader)
        alpha = np.array([[float(x) for x in r[2:]] for r in arows]).reshape(B, len(head) - 2)
        with open(path / "loglik.csv", newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            lrows = list(reader)
        chain = np.array([int(r[0]) for r in lrows])
        iteration = np.array([int(r[1]) for r in lrows])
        logpost = np.array([float(r[2]) for r in lrows])
        n_fixed = np.array([[int(x) for x in r[3].split(";")] for r in lrows])
        loglik = np.array([[float(x) for x in r[4:]] for r in lrows]).reshape(B, T, -1)
        return cls(labels, alpha, head[2:], loglik, logpost, n_fixed, iteration, chain, meta)


def merge_archives(archives: list[DrawsArchive]) -> DrawsArchive:
    first = archives[0]
    return DrawsArchive(
        labels=np.concatenate([a.labels for a in archives]),
        alpha=np.concatenate([a.alpha for a in archives]),
        alpha_names=first.alpha_names,
        loglik=np.concatenate([a.loglik for a in archives]),
        logpost=np.concatenate([a.logpost for a in archives]),
        n_fixed=np.concatenate([a.n_fixed for a in archives]),
        iteration=np.concatenate([a.iteration for a in archives]),
        chain=np.concatenate([a.chain for a in archives]),
        meta=first.meta,
    )


# ------------------------------------------------------------------------- runs

def _chain_seeds(seed: int, chains: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(chains)


def _run_one(data: Dataset, prior, hp: Hyperparams, cfg: McmcConfig, chain: int,
             child: np.random.SeedSequence) -> DrawsArchive:
    rng = np.random.default_rng(child)
    state = initial_state(data, prior, hp, cfg.n_aux, rng)
    pb = _problem(data, prior, hp, cfg.n_aux)
    B = cfg.n_draws
    rec_lab = np.zeros((B, data.T, data.m), dtype=np.int64)
    rec_alpha = np.zeros((B, pb.alpha.n_blocks))
    rec_ll = np.zeros((B, data.T, data.m))
    rec_lp = np.zeros(B)
    rec_ng = np.zeros((B, data.T), dtype=np.int64)
    K.seed(int(child.generate_state(1)[0] & 0x7FFFFFFF))
    s = state
    K.run(pb.y, s.lab, s.k, s.cnt, s.mu, s.sig, s.gam, s.theta, s.tau, s.glob, pb.c0, s.ct,
          s.alpha, pb.blk, pb.alpha.a, pb.alpha.b, pb.icfg, pb.fcfg,
          cfg.iters, cfg.burnin, cfg.thin, rec_lab, rec_alpha, rec_ll, rec_lp, rec_ng)
    iteration = cfg.burnin + cfg.thin * np.arange(1, B + 1)
    return DrawsArchive(rec_lab, rec_alpha, pb.alpha.block_names(), rec_ll, rec_lp, rec_ng,
                        iteration, np.full(B, chain), {})


def _run(data: Dataset, prior, hp: Hyperparams, cfg: McmcConfig, threads: int = 1) -> DrawsArchive:
    _problem(data, prior, hp, cfg.n_aux)  # validate before spawning work
    seeds = _chain_seeds(cfg.seed, cfg.chains)
    if threads > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=min(threads, cfg.chains)) as ex:
            futs = [ex.submit(_run_one, data, prior, hp, cfg, c, s) for c, s in enumerate(seeds)]
            parts = [f.result() for f in futs]
    else:
        parts = [_run_one(data, prior, hp, cfg, c, s) for c, s in enumerate(seeds)]
    arch = merge_archives(parts)
    arch.meta = {"mcmc": asdict(cfg), "hyperparams": asdict(hp), "seed": cfg.seed,
                 "versions": {"ipart": __version__, "numpy": np.__version__}}
    return arch


def run_chain(data: Dataset, model: SequenceModel | CRPPrior | ICRPPrior, hp: Hyperparams,
              cfg: McmcConfig, threads: int = 1) -> DrawsArchive:
    """Sample the informed (or baseline CRP) partition model posterior."""
    if not isinstance(model, (SequenceModel, CRPPrior, ICRPPrior)):
        raise TypeError("run_chain expects a SequenceModel, ICRPPrior or CRPPrior")
    return _run(data, model, hp, cfg, threads)


def run_chain_cpp(data: Dataset, prior: CPPPrior, hp: Hyperparams, cfg: McmcConfig, threads: int = 1) -> DrawsArchive:
    return _run(data, prior, hp, cfg, threads)


def run_chain_lsp(data: Dataset, prior: LSPPrior, hp: Hyperparams, cfg: McmcConfig, threads: int = 1) -> DrawsArchive:
    return _run(data, prior, hp, cfg, threads)


def fit(data: Dataset, prior, hp: Hyperparams, cfg: McmcConfig, threads: int = 1) -> DrawsArchive:
    if isinstance(prior, CPPPrior):
        return run_chain_cpp(data, prior, hp, cfg, threads)
    if isinstance(prior, LSPPrior):
        return run_chain_lsp(data, prior, hp, cfg, threads)
    return run_chain(data, prior, hp, cfg, threads)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("IPART_THREADS", "1")))
    except ValueError:
        return 1
