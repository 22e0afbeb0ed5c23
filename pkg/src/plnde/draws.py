"""Sampler configuration and saved posterior draws."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

MODELS = ("lognormal", "negbinom")


@dataclass(frozen=True)
class SamplerConfig:
    """MCMC run settings.

    ``fix_tau``, ``fix_sigma_gamma`` and ``fix_psi0`` hold the corresponding
    hyperparameter at the given value (standard-deviation scale for the two
    variances) instead of sampling it.  ``block_size`` fixes how genes are
    partitioned into independent random substreams, so results do not depend
    on ``threads``.
    """

    n_iter: int = 20000
    n_burnin: int = 10000
    thin: int = 10
    seed: int = 0
    model: str = "lognormal"
    fix_tau: float | None = None
    fix_pi: float | None = None
    fix_sigma_gamma: float | None = None
    fix_psi0: float | None = None
    allow_free_tau: bool = False
    adapt_after_burnin: bool = True
    warmup: int = 100
    lambda_step: float = 0.1
    alpha_step: float = 0.3
    joint_step: float = 0.1
    block_size: int = 4096
    threads: int = 1
    save_lambda: bool = False

    def __post_init__(self):
        if not 0 <= self.n_burnin < self.n_iter:
            raise ValueError("need 0 <= n_burnin < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        for name in ("fix_tau", "fix_sigma_gamma"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.fix_pi is not None and not 0 < self.fix_pi < 1:
            raise ValueError("fix_pi must lie in (0, 1)")
        if self.block_size < 1 or self.threads < 1:
            raise ValueError("block_size and threads must be positive")

    @property
    def n_saved(self) -> int:
        return (self.n_iter - self.n_burnin) // self.thin

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SamplerConfig:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class PosteriorDraws:
    """Thinned snapshots of one chain.

    Per-gene arrays are (snapshots x genes); ``alpha`` is
    (snapshots x genes x 2) with condition A in slot 0.
    """

    gene_ids: tuple[str, ...]
    model: str
    mu_a: np.ndarray
    gamma: np.ndarray
    indicator: np.ndarray
    alpha: np.ndarray
    pi: np.ndarray
    sigma_gamma_sq: np.ndarray
    psi0: np.ndarray
    tau_sq: np.ndarray
    acceptance: dict = field(default_factory=dict)
    elapsed: float = 0.0
    lam: np.ndarray | None = None

    @property
    def n_draws(self) -> int:
        return self.mu_a.shape[0]

    @property
    def m(self) -> int:
        return len(self.gene_ids)

    @property
    def mu_b(self) -> np.ndarray:
        return self.mu_a + self.gamma

    @property
    def p_de(self) -> np.ndarray:
        return self.indicator.mean(axis=0)

    def acceptance_summary(self) -> dict:
        return {k: float(np.mean(v)) for k, v in sorted(self.acceptance.items())}

    def gene_summary(self) -> dict[str, np.ndarray]:
        q = np.quantile(self.gamma, [0.025, 0.25, 0.5, 0.75, 0.975], axis=0)
        return {
            "p_de": self.p_de,
            "gamma_mean": self.gamma.mean(axis=0),
            "gamma_median": q[2],
            "gamma_q2.5": q[0],
            "gamma_q25": q[1],
            "gamma_q75": q[3],
            "gamma_q97.5": q[4],
            "alpha_a_median": np.median(self.alpha[:, :, 0], axis=0),
            "alpha_b_median": np.median(self.alpha[:, :, 1], axis=0),
        }
