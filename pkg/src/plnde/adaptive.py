"""Adaptive random-walk Metropolis-Hastings (Haario et al. 2001), batched.

Every :class:`AdaptiveProposal` holds a *batch* of independent proposal
states, one per parameter block, so that e.g. all ``lambda_ij`` entries of a
chain are proposed and accepted in one vectorized step.  Each block keeps a
running mean and covariance of its own history (Welford updates) and
proposes from ``N(current, scale * cov + jitter * I)`` once it has seen
``warmup`` records; before that it uses ``initial_step**2 * I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

JITTER = 1e-6
WARMUP = 100
BERNOULLI_CLAMP = 0.01
LOG_2PI = np.log(2 * np.pi)


@dataclass
class AdaptiveProposal:
    batch_shape: tuple[int, ...]
    dim: int = 1
    initial_step: float | np.ndarray = 0.1
    scale: float | None = None
    jitter: float = JITTER
    warmup: int = WARMUP
    count: np.ndarray = field(init=False, repr=False)
    history_mean: np.ndarray = field(init=False, repr=False)
    m2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.batch_shape = tuple(self.batch_shape)
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.scale is None:
            self.scale = 2.4**2 / self.dim
        self.count = np.zeros(self.batch_shape, dtype=np.int64)
        self.history_mean = np.zeros(self.batch_shape + (self.dim,))
        self.m2 = np.zeros(self.batch_shape + (self.dim, self.dim))

    def record(self, x: np.ndarray, mask: np.ndarray | None = None) -> None:
        """Add ``x`` (batch + (dim,)) to the history of blocks where ``mask`` holds."""
        x = np.asarray(x, dtype=float).reshape(self.batch_shape + (self.dim,))
        if mask is None:
            self.count += 1
            n = self.count[..., None]
            delta = x - self.history_mean
            self.history_mean += delta / n
            self.m2 += delta[..., :, None] * (x - self.history_mean)[..., None, :]
            return
        mask = np.asarray(mask, dtype=bool)
        self.count += mask
        n = np.maximum(self.count, 1)[..., None]
        delta = np.where(mask[..., None], x - self.history_mean, 0.0)
        self.history_mean += delta / n
        self.m2 += delta[..., :, None] * (x - self.history_mean)[..., None, :]

    @property
    def history_cov(self) -> np.ndarray:
        denom = np.maximum(self.count - 1, 1)[..., None, None]
        cov = self.m2 / denom
        return np.where((self.count >= 2)[..., None, None], cov, 0.0)

    def proposal_cov(self) -> np.ndarray:
        eye = np.eye(self.dim)
        adapted = self.scale * self.history_cov + self.jitter * eye
        step = np.broadcast_to(np.asarray(self.initial_step, dtype=float), self.batch_shape)
        fixed = (step**2)[..., None, None] * eye
        return np.where((self.count >= self.warmup)[..., None, None], adapted, fixed)

    def proposal_sd(self) -> np.ndarray:
        """Per-block proposal standard deviation; only for ``dim == 1``."""
        if self.dim != 1:
            raise ValueError("proposal_sd is defined for scalar blocks only")
        var = self.scale * self.history_cov[..., 0, 0] + self.jitter
        step = np.broadcast_to(np.asarray(self.initial_step, dtype=float), self.batch_shape)
        return np.where(self.count >= self.warmup, np.sqrt(var), step)

    def cholesky(self) -> np.ndarray:
        return _chol(self.proposal_cov())

    def logpdf(self, x: np.ndarray, center: np.ndarray) -> np.ndarray:
        """Log density of ``N(center, proposal_cov)`` at ``x``."""
        return _mvn_logpdf(x - center, self.cholesky())


def _chol(cov: np.ndarray) -> np.ndarray:
    d = cov.shape[-1]
    if d == 1:
        return np.sqrt(cov)
    if d == 2:
        a, b, c = cov[..., 0, 0], cov[..., 1, 0], cov[..., 1, 1]
        l11 = np.sqrt(a)
        l21 = np.divide(b, l11, out=np.zeros_like(b), where=l11 > 0)
        l22 = np.sqrt(np.maximum(c - l21**2, 0.0))
        out = np.zeros_like(cov)
        out[..., 0, 0] = l11
        out[..., 1, 0] = l21
        out[..., 1, 1] = l22
        return out
    return np.linalg.cholesky(cov)


def _mvn_logpdf(diff: np.ndarray, chol: np.ndarray) -> np.ndarray:
    d = diff.shape[-1]
    if d == 1:
        z = diff[..., 0] / chol[..., 0, 0]
        logdet = np.log(chol[..., 0, 0])
        return -0.5 * z**2 - logdet - 0.5 * LOG_2PI
    if d == 2:
        z0 = diff[..., 0] / chol[..., 0, 0]
        z1 = (diff[..., 1] - chol[..., 1, 0] * z0) / chol[..., 1, 1]
        logdet = np.log(chol[..., 0, 0]) + np.log(chol[..., 1, 1])
        return -0.5 * (z0**2 + z1**2) - logdet - LOG_2PI
    import scipy.linalg

    z = np.stack(
        [scipy.linalg.solve_triangular(L, v, lower=True) for L, v in zip(chol.reshape(-1, d, d), diff.reshape(-1, d))]
    ).reshape(diff.shape)
    logdet = np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(-1)
    return -0.5 * (z**2).sum(-1) - logdet - 0.5 * d * LOG_2PI


def propose(ap: AdaptiveProposal, current: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random-walk proposal centred at ``current`` with the adapted covariance.

    For ``dim == 1`` the trailing axis may be omitted from ``current``.
    """
    current = np.asarray(current, dtype=float)
    if not np.all(np.isfinite(current)):
        raise FloatingPointError("non-finite state passed to propose()")
    if ap.dim == 1:
        shaped = current.reshape(ap.batch_shape)
        out = shaped + ap.proposal_sd() * rng.standard_normal(ap.batch_shape)
        return out.reshape(current.shape)
    z = rng.standard_normal(ap.batch_shape + (ap.dim,))
    return current + np.einsum("...ij,...j->...i", ap.cholesky(), z)


def accept(log_target_current, log_target_proposed, rng: np.random.Generator, log_correction=0.0):
    """Metropolis-Hastings accept/reject, elementwise.

    Accepts with probability ``min(1, exp(proposed - current + correction))``.
    A proposed value of ``-inf`` is always rejected; NaN is a hard error.
    """
    cur = np.asarray(log_target_current, dtype=float)
    prop = np.asarray(log_target_proposed, dtype=float)
    if np.isnan(cur).any() or np.isnan(prop).any():
        raise FloatingPointError("NaN log density in accept()")
    with np.errstate(invalid="ignore"):
        log_ratio = prop - cur + log_correction
    log_ratio = np.where(np.isneginf(prop), -np.inf, log_ratio)
    u = rng.random(np.shape(log_ratio))
    out = u < np.exp(np.minimum(log_ratio, 0.0))
    return bool(out) if out.ndim == 0 else out


@dataclass
class DiscreteMixedProposal:
    """Joint proposal for a binary indicator and a continuous vector.

    Branch 1 moves all ``dim`` coordinates; branch 0 holds the coordinates in
    ``zero_in_branch0`` at exactly zero and moves the rest.  The indicator is
    proposed from Bernoulli(running mean of the indicator's history), clamped
    to ``[eps, 1 - eps]``.  A proposal that stays in the current branch is a
    random walk; a proposal that switches branch draws the continuous part
    from the target branch's adapted normal, centred at that branch's running
    mean.  :func:`propose_mixed` returns the log Hastings correction.
    """

    batch_shape: tuple[int, ...]
    dim: int
    zero_in_branch0: tuple[int, ...]
    initial_step: float = 0.1
    eps: float = BERNOULLI_CLAMP
    warmup: int = WARMUP
    ind_count: np.ndarray = field(init=False, repr=False)
    ind_sum: np.ndarray = field(init=False, repr=False)
    branch: tuple[AdaptiveProposal, AdaptiveProposal] = field(init=False, repr=False)
    last: tuple[np.ndarray, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        self.batch_shape = tuple(self.batch_shape)
        self.free0 = tuple(i for i in range(self.dim) if i not in self.zero_in_branch0)
        self.ind_count = np.zeros(self.batch_shape, dtype=np.int64)
        self.ind_sum = np.zeros(self.batch_shape, dtype=np.int64)
        self.branch = (
            AdaptiveProposal(self.batch_shape, len(self.free0), self.initial_step, warmup=self.warmup),
            AdaptiveProposal(self.batch_shape, self.dim, self.initial_step, warmup=self.warmup),
        )
        self.last = (np.zeros(self.batch_shape + (self.dim,)), np.zeros(self.batch_shape + (self.dim,)))

    @property
    def bernoulli_rate(self) -> np.ndarray:
        rate = np.where(self.ind_count > 0, self.ind_sum / np.maximum(self.ind_count, 1), 0.5)
        return np.clip(rate, self.eps, 1 - self.eps)

    def seed_branches(self, theta0: np.ndarray, theta1: np.ndarray) -> None:
        """Give each branch one history point so both can be proposed into."""
        theta0 = np.array(theta0, dtype=float)
        theta0[..., list(self.zero_in_branch0)] = 0.0
        self.branch[0].record(theta0[..., self.free0])
        self.branch[1].record(theta1)
        self.last = (theta0, np.array(theta1, dtype=float))

    def record(self, indicator: np.ndarray, theta: np.ndarray) -> None:
        ind = np.asarray(indicator).astype(bool)
        self.ind_count += 1
        self.ind_sum += ind
        self.branch[0].record(theta[..., self.free0], ~ind)
        self.branch[1].record(theta, ind)
        self.last = (
            np.where(~ind[..., None], theta, self.last[0]),
            np.where(ind[..., None], theta, self.last[1]),
        )

    def _branch_logpdf(self, b: int, theta: np.ndarray) -> np.ndarray:
        ap = self.branch[b]
        if b == 0:
            return ap.logpdf(theta[..., self.free0], ap.history_mean)
        return ap.logpdf(theta, ap.history_mean)


def propose_mixed(dp: DiscreteMixedProposal, current, rng: np.random.Generator):
    """Propose ``(indicator, theta)`` and return ``(ind*, theta*, log_correction)``.

    ``log_correction`` is ``log q(current | proposed) - log q(proposed | current)``
    and must be added to the Metropolis-Hastings log ratio.
    """
    ind, theta = current
    ind = np.asarray(ind).astype(bool)
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("non-finite state passed to propose_mixed()")
    rate = dp.bernoulli_rate
    new_ind = rng.random(dp.batch_shape) < rate

    b0, b1 = dp.branch
    free0 = list(dp.free0)
    zero0 = list(dp.zero_in_branch0)
    chol1 = b1.cholesky()
    chol0 = b0.cholesky()
    # a singular branch proposal (zero step) has no density to jump with: stay put
    regular = (np.diagonal(chol1, axis1=-2, axis2=-1) > 0).all(-1) & (np.diagonal(chol0, axis1=-2, axis2=-1) > 0).all(-1)
    new_ind = np.where(regular, new_ind, ind)
    switch = new_ind != ind

    # same-branch random walk
    z1 = rng.standard_normal(dp.batch_shape + (dp.dim,))
    step1 = np.einsum("...ij,...j->...i", chol1, z1)
    step0 = np.zeros_like(theta)
    step0[..., free0] = np.einsum("...ij,...j->...i", chol0, z1[..., free0])

    # branch switch: fresh draw around the target branch's running mean
    jump1 = b1.history_mean + step1
    jump0 = np.zeros_like(theta)
    jump0[..., free0] = b0.history_mean + step0[..., free0]

    stay = np.where(ind[..., None], theta + step1, theta + step0)
    jump = np.where(new_ind[..., None], jump1, jump0)
    proposed = np.where(switch[..., None], jump, stay)
    proposed[..., zero0] = np.where(new_ind[..., None], proposed[..., zero0], 0.0)

    log_bern = lambda i: np.where(i, np.log(rate), np.log1p(-rate))  # noqa: E731
    with np.errstate(divide="ignore", invalid="ignore"):
        fwd = log_bern(new_ind) + np.where(new_ind, dp._branch_logpdf(1, proposed), dp._branch_logpdf(0, proposed))
        rev = log_bern(ind) + np.where(ind, dp._branch_logpdf(1, theta), dp._branch_logpdf(0, theta))
    correction = np.where(switch, rev - fwd, 0.0)
    return new_ind, proposed, correction
