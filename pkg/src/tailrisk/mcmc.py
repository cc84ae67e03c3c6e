"""Adaptive multi-block Metropolis sampler with a final independence stage.

Burn-in runs in epochs. Within an epoch each parameter block is updated by a
random-walk Metropolis step whose proposal is a mixture of three Gaussians
with covariances C_i * scale^2 * Sigma_block, C = (1, 100, 0.01). The scalar
scale follows a diminishing log Robbins-Monro rule toward the dimension
dependent target acceptance rate (44% / 35% / 23.4%); Sigma_block is refreshed
after every epoch from the post-discard iterates. Epochs stop once the mean
absolute percentage change of the per-parameter standard deviations drops
below the threshold (or at the epoch cap). A final epoch runs an independence
Metropolis-Hastings step per block, proposing from the same three-component
mixture centered at the last epoch's post-discard mean with its sample
covariance. The post-discard independence iterates are the retained sample;
per-iterate one-step forecasts are averaged into the posterior-mean forecast.

The prior is flat over the constraint region, so the target is the composite
likelihood restricted to valid parameter points. Chains are reproducible:
(seed, config, data) fully determine every iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from . import mle
from .models import InitPolicy, ModelSpec, ParamVector, as_arrays, theta_valid

BATCH = 100  # iterations per scale-tuning batch
_JITTER = 1e-10


def target_rate(dim: int) -> float:
    """Target acceptance rate by block dimension."""
    if dim == 1:
        return 0.44
    if dim <= 4:
        return 0.35
    return 0.234


def sampler_support(family, theta) -> bool:
    """Prior support: the constraint region plus a proper bound on the
    exponential ES ratio parameter.

    As gamma0 -> -inf the ES ratio tends to 1 and the likelihood converges to
    a positive constant, so a flat prior over an unbounded gamma0 would make
    the posterior improper; the support matches the documented candidate box.
    """
    if not theta_valid(family, theta):
        return False
    if family.es_kind == "exp":
        g0 = theta[-1]
        return -5.0 <= g0 <= 1.0
    return True


@dataclass(frozen=True)
class McmcConfig:
    epoch_length: int = 20_000
    discard: int = 2_000
    sd_change_threshold: float = 0.10
    max_epochs: int = 6
    final_imh_length: int = 10_000
    proposal_c: tuple[float, float, float] = (1.0, 100.0, 0.01)
    proposal_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.discard < self.epoch_length):
            raise ValueError("discard must be positive and smaller than the epoch length")
        if self.discard >= self.final_imh_length:
            raise ValueError("discard must be smaller than the final stage length")
        if self.sd_change_threshold <= 0:
            raise ValueError("sd change threshold must be positive")
        if self.max_epochs < 1:
            raise ValueError("need at least one burn-in epoch")
        if len(self.proposal_c) != len(self.proposal_weights):
            raise ValueError("one weight per mixture component")
        if min(self.proposal_weights) < 0 or sum(self.proposal_weights) <= 0:
            raise ValueError("mixture weights must be non-negative and sum to > 0")


@dataclass(frozen=True)
class BlockLayout:
    """Ordered partition of the family's parameter names."""

    blocks: tuple[tuple[str, ...], ...]

    @classmethod
    def default(cls, spec: ModelSpec) -> "BlockLayout":
        fam = spec.family
        gammas = ("gamma0", "gamma1", "gamma2") if fam.es_kind == "ar" else ("gamma0",)
        if fam.uses_measure:
            return cls((("beta0", "beta1", "beta2", "phi"), ("xi", "tau1", "tau2", "sigma_u"), gammas))
        return cls((("beta0", "beta1", "beta2"), gammas))

    def indices_for(self, spec: ModelSpec) -> list[np.ndarray]:
        names = spec.param_names
        flat = [p for blk in self.blocks for p in blk]
        if sorted(flat) != sorted(names):
            raise ValueError(
                f"blocks {self.blocks} are not a partition of {names}"
            )
        return [np.array([names.index(p) for p in blk], dtype=np.int64) for blk in self.blocks]


@dataclass(frozen=True)
class Chain:
    """All iterates (burn-in epochs followed by the independence stage)."""

    iterates: np.ndarray
    epoch_bounds: tuple[tuple[int, int], ...]
    accepts: np.ndarray  # (n_epochs, n_blocks)
    proposals: np.ndarray
    seed: int
    param_names: tuple[str, ...]


@dataclass(frozen=True)
class SamplerRun:
    iterates: np.ndarray
    epoch_bounds: tuple[tuple[int, int], ...]
    accepts: np.ndarray
    proposals: np.ndarray
    retained_start: int
    burnin_epochs: int
    sd_changes: tuple[float, ...]
    imh_means: tuple[np.ndarray, ...]
    imh_covs: tuple[np.ndarray, ...]


class _MixtureProposal:
    """Shared-mean Gaussian mixture with component covariances C_i * Sigma."""

    def __init__(self, mean, sigma, c, weights):
        self.mean = mean
        d = len(mean)
        self.d = d
        self.c = np.asarray(c, dtype=float)
        self.w = np.asarray(weights, dtype=float) / sum(weights)
        self.chol = np.linalg.cholesky(sigma)
        self.chol_inv = np.linalg.inv(self.chol)
        logdet = 2.0 * np.sum(np.log(np.diag(self.chol)))
        self._log_norm = -0.5 * (d * K.LOG_2PI + logdet + d * np.log(self.c))

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        comp = int(np.searchsorted(np.cumsum(self.w), rng.random()))
        comp = min(comp, len(self.c) - 1)
        z = rng.standard_normal(self.d)
        return self.mean + math.sqrt(self.c[comp]) * (self.chol @ z)

    def logpdf(self, v) -> float:
        y = self.chol_inv @ (v - self.mean)
        maha = float(y @ y)
        logs = np.log(self.w + 1e-300) + self._log_norm - 0.5 * maha / self.c
        m = logs.max()
        return float(m + math.log(np.exp(logs - m).sum()))


def run_sampler(
    log_target: Callable[[np.ndarray], float],
    theta0: np.ndarray,
    block_indices: Sequence[np.ndarray],
    cfg: McmcConfig,
    is_valid: Callable[[np.ndarray], bool] | None = None,
) -> SamplerRun:
    """Generic adaptive engine; the model wrapper and toy tests share it."""
    theta = np.asarray(theta0, dtype=float).copy()
    ll = log_target(theta)
    if not math.isfinite(ll):
        raise ValueError("non-finite log target at the initial point")
    blocks = [np.asarray(b, dtype=np.int64) for b in block_indices]
    nb = len(blocks)
    dims = [len(b) for b in blocks]
    targets = [target_rate(d) for d in dims]
    sqrt_c = np.sqrt(np.asarray(cfg.proposal_c, dtype=float))
    cum_w = np.cumsum(np.asarray(cfg.proposal_weights, dtype=float) / sum(cfg.proposal_weights))
    rng = np.random.default_rng(cfg.seed)

    total_cap = cfg.max_epochs * cfg.epoch_length + cfg.final_imh_length
    iterates = np.empty((total_cap, len(theta)))
    accepts = np.zeros((cfg.max_epochs + 1, nb), dtype=np.int64)
    proposals = np.zeros((cfg.max_epochs + 1, nb), dtype=np.int64)

    chols = [np.linalg.cholesky((2.38 / math.sqrt(d)) * np.eye(d)) for d in dims]
    scales = [1.0] * nb
    covs = [c @ c.T for c in chols]
    prev_sds = None
    sd_changes: list[float] = []
    epoch_bounds: list[tuple[int, int]] = []
    row = 0
    burnin_epochs = 0

    for epoch in range(cfg.max_epochs):
        start = row
        batch_acc = np.zeros(nb, dtype=np.int64)
        batch_k = 1
        for it in range(cfg.epoch_length):
            for b in range(nb):
                idx = blocks[b]
                comp = min(int(np.searchsorted(cum_w, rng.random())), len(sqrt_c) - 1)
                step = scales[b] * sqrt_c[comp] * (chols[b] @ rng.standard_normal(dims[b]))
                cand = theta.copy()
                cand[idx] += step
                proposals[epoch, b] += 1
                if is_valid is None or is_valid(cand):
                    ll_cand = log_target(cand)
                    if ll_cand - ll > math.log(rng.random()):
                        theta, ll = cand, ll_cand
                        accepts[epoch, b] += 1
                        batch_acc[b] += 1
            iterates[row] = theta
            row += 1
            if (it + 1) % BATCH == 0:
                for b in range(nb):
                    rate = batch_acc[b] / BATCH
                    # extreme rates mean the scale is orders of magnitude off;
                    # bypass the 1/k damping until proposals start moving
                    if rate == 0.0:
                        scales[b] *= 0.3
                    elif rate == 1.0:
                        scales[b] *= 3.0
                    else:
                        scales[b] *= math.exp((rate - targets[b]) / batch_k)
                batch_acc[:] = 0
                batch_k += 1
        epoch_bounds.append((start, row))
        burnin_epochs = epoch + 1
        if np.any(accepts[epoch] == 0):
            raise RuntimeError(
                f"epoch {epoch + 1}: a block accepted no proposals; degenerate start"
            )
        post = iterates[start + cfg.discard : row]
        for b in range(nb):
            sub = post[:, blocks[b]]
            cov = np.atleast_2d(np.cov(sub, rowvar=False)) + _JITTER * np.eye(dims[b])
            covs[b] = cov
            chols[b] = np.linalg.cholesky(cov)
        sds = post.std(axis=0, ddof=1)
        if prev_sds is not None:
            denom = np.where(prev_sds > 0, prev_sds, 1.0)
            change = float(np.mean(np.abs(sds - prev_sds) / denom))
            sd_changes.append(change)
            if change < cfg.sd_change_threshold:
                prev_sds = sds
                break
        prev_sds = sds

    # independence stage around the last burn-in epoch's post-discard sample
    last_start, last_end = epoch_bounds[-1]
    post = iterates[last_start + cfg.discard : last_end]
    mixtures = []
    for b in range(nb):
        sub = post[:, blocks[b]]
        mu = sub.mean(axis=0)
        cov = np.atleast_2d(np.cov(sub, rowvar=False)) + _JITTER * np.eye(dims[b])
        mixtures.append(_MixtureProposal(mu, cov, cfg.proposal_c, cfg.proposal_weights))
    imh_epoch = burnin_epochs
    q_cur = [mixtures[b].logpdf(theta[blocks[b]]) for b in range(nb)]
    imh_start = row
    for _ in range(cfg.final_imh_length):
        for b in range(nb):
            idx = blocks[b]
            cand_block = mixtures[b].draw(rng)
            cand = theta.copy()
            cand[idx] = cand_block
            proposals[imh_epoch, b] += 1
            if is_valid is None or is_valid(cand):
                ll_cand = log_target(cand)
                q_prop = mixtures[b].logpdf(cand_block)
                if (ll_cand - ll) + (q_cur[b] - q_prop) > math.log(rng.random()):
                    theta, ll = cand, ll_cand
                    q_cur[b] = q_prop
                    accepts[imh_epoch, b] += 1
        iterates[row] = theta
        row += 1
    epoch_bounds.append((imh_start, row))

    n_epochs = burnin_epochs + 1
    return SamplerRun(
        iterates=iterates[:row].copy(),
        epoch_bounds=tuple(epoch_bounds),
        accepts=accepts[:n_epochs].copy(),
        proposals=proposals[:n_epochs].copy(),
        retained_start=imh_start + cfg.discard,
        burnin_epochs=burnin_epochs,
        sd_changes=tuple(sd_changes),
        imh_means=tuple(m.mean.copy() for m in mixtures),
        imh_covs=tuple(m.chol @ m.chol.T for m in mixtures),
    )


@dataclass(frozen=True)
class McmcResult:
    chain: Chain
    retained: np.ndarray
    posterior_mean: ParamVector
    forecast_var_draws: np.ndarray
    forecast_es_draws: np.ndarray
    forecast: tuple[float, float]
    epochs_run: int
    sd_changes: tuple[float, ...]

    @property
    def acceptance_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.chain.accepts / np.maximum(self.chain.proposals, 1)


def run_mcmc(
    spec: ModelSpec,
    data,
    cfg: McmcConfig = McmcConfig(),
    layout: BlockLayout | None = None,
    init_params: ParamVector | None = None,
    init: InitPolicy = InitPolicy(),
) -> McmcResult:
    """Sample the posterior and form posterior-mean forecasts.

    The starting point defaults to a short step-1 quantile fit plus mid-range
    values for the remaining parameters.
    """
    fam = spec.family
    layout = layout or BlockLayout.default(spec)
    blocks = layout.indices_for(spec)
    r, x = as_arrays(data)
    if r.size == 0:
        raise ValueError("data must be non-empty")
    q1 = init.resolve_q1(spec.alpha, r)
    x1 = init.resolve_x1()
    code = fam.code

    if init_params is None:
        ss = np.random.SeedSequence(cfg.seed)
        init_seed = int(ss.generate_state(1)[0] % 2**31)
        init_params = mle.initial_point(spec, data, seed=init_seed)
    theta0 = init_params.to_array(fam)

    def log_target(theta):
        total, _, _ = K.loglik(code, theta, r, x, spec.alpha, q1, x1)
        return total

    run = run_sampler(log_target, theta0, blocks, cfg, is_valid=lambda t: sampler_support(fam, t))

    chain = Chain(
        iterates=run.iterates,
        epoch_bounds=run.epoch_bounds,
        accepts=run.accepts,
        proposals=run.proposals,
        seed=cfg.seed,
        param_names=spec.param_names,
    )
    retained = run.iterates[run.retained_start :]
    var_draws, es_draws = K.forecast_batch(code, retained, r, x, spec.alpha, q1, x1)
    post_mean = ParamVector.from_array(fam, retained.mean(axis=0))
    return McmcResult(
        chain=chain,
        retained=retained,
        posterior_mean=post_mean,
        forecast_var_draws=var_draws,
        forecast_es_draws=es_draws,
        forecast=(float(var_draws.mean()), float(es_draws.mean())),
        epochs_run=run.burnin_epochs,
        sd_changes=run.sd_changes,
    )


def run_chains(spec, data, cfg: McmcConfig, n_chains: int = 2, **kw) -> list[McmcResult]:
    """Independent chains with derived seeds, for convergence diagnostics."""
    from dataclasses import replace

    seeds = np.random.SeedSequence(cfg.seed).generate_state(n_chains)
    return [
        run_mcmc(spec, data, replace(cfg, seed=int(s % 2**31)), **kw) for s in seeds
    ]


def gelman_rubin(chains: Sequence[np.ndarray]) -> np.ndarray:
    """Potential scale reduction factor per parameter from >= 2 chains.

    Chains with zero within-variance give inf (or 1.0 when the between
    variance is also zero, i.e. identical constant chains).
    """
    arrs = [np.atleast_2d(np.asarray(c, dtype=float).T).T for c in chains]
    if len(arrs) < 2:
        raise ValueError("need at least two chains")
    n = arrs[0].shape[0]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise ValueError("chains must have equal retained lengths")
    if n < 2:
        raise ValueError("chains too short")
    stacked = np.stack(arrs)  # (m, n, d)
    w = stacked.var(axis=1, ddof=1).mean(axis=0)
    b_over_n = stacked.mean(axis=1).var(axis=0, ddof=1)
    out = np.empty(w.shape)
    for j in range(w.size):
        if w[j] == 0.0:
            out[j] = 1.0 if b_over_n[j] == 0.0 else np.inf
        else:
            var_plus = (n - 1) / n * w[j] + b_over_n[j]
            out[j] = math.sqrt(var_plus / w[j])
    return out


def effective_sample_size(x) -> float:
    """ESS via the initial-positive-sequence truncation of the ACF."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 100:
        raise ValueError("need a retained length of at least 100")
    x = x - x.mean()
    var0 = float(x @ x) / n
    if var0 == 0.0:
        raise ValueError("constant chain has no effective sample size")
    f = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    rho = acov / acov[0]
    tau = -1.0
    m = 0
    while 2 * m + 1 < n:
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        m += 1
    tau = max(tau, 1.0)
    return float(n / tau)


def dump_chain_csv(chain: Chain, layout: BlockLayout, path, start: int = 0) -> None:
    """Optional long-format diagnostics dump: iter,block,param,value."""
    import csv

    name_to_block = {}
    for bi, blk in enumerate(layout.blocks):
        for p in blk:
            name_to_block[p] = bi
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "block", "param", "value"])
        for i in range(start, chain.iterates.shape[0]):
            for j, name in enumerate(chain.param_names):
                w.writerow([i, name_to_block[name], name, repr(float(chain.iterates[i, j]))])
