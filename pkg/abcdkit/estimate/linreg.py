"""Ordinary least squares with classical inference."""

from dataclasses import dataclass, field
from typing import Dict, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, special, stats

from abcdkit.errors import DomainError, InsufficientDataError, NestingError, SingularDesignError
from abcdkit.logger import logger as abcd_logger

logger = abcd_logger.getChild("linreg")

INTERCEPT = "const"
# rank is decided relative to the largest diagonal entry of R
RANK_TOLERANCE = 1e-10
# residual norm, relative to ||y||, below which a fit counts as exact
EXACT_FIT_TOLERANCE = 1e-12

CovType = Literal["classical", "hc1"]


@dataclass(frozen=True)
class DesignMatrix:
    names: Tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DomainError("a design matrix must be two-dimensional")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) != values.shape[1]:
            raise DomainError(f"{len(self.names)} names for {values.shape[1]} columns")
        if len(set(self.names)) != len(self.names):
            raise DomainError(f"column names must be unique: {self.names}")
        if not np.all(np.isfinite(values)):
            raise DomainError("design matrix has non-finite entries")

    @classmethod
    def from_columns(
        cls,
        columns: Mapping[str, Sequence[float]],
        intercept: bool = True,
        n: Optional[int] = None,
    ) -> "DesignMatrix":
        """Build a design from named columns; the intercept, if any, comes first.

        ``n`` gives the row count of an intercept-only design and must match the
        columns when both are given.
        """
        arrays = [np.asarray(v, dtype=float) for v in columns.values()]
        names = list(columns)
        lengths = {len(a) for a in arrays}
        if n is not None:
            lengths.add(n)
        if len(lengths) > 1:
            raise DomainError(f"columns have mismatched lengths: {sorted(lengths)}")
        if intercept:
            if not lengths:
                raise DomainError("an intercept-only design needs an explicit row count")
            arrays.insert(0, np.ones(lengths.pop()))
            names.insert(0, INTERCEPT)
        if not arrays:
            raise DomainError("a design needs at least one column")
        return cls(tuple(names), np.column_stack(arrays))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def has_intercept(self) -> bool:
        return bool(self.names) and self.names[0] == INTERCEPT

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def without(self, *names: str) -> "DesignMatrix":
        keep = [i for i, name in enumerate(self.names) if name not in names]
        return DesignMatrix(tuple(self.names[i] for i in keep), self.values[:, keep])


@dataclass(frozen=True)
class RegressionFit:
    names: Tuple[str, ...]
    coefficients: Dict[str, float]
    std_errors: Dict[str, float]
    t_values: Dict[str, float]
    p_values: Dict[str, float]
    rss: float
    r2: float
    adj_r2: float
    df_resid: int
    n: int
    cov_type: str = "classical"
    cov: np.ndarray = field(default=None, repr=False, compare=False)
    fitted: np.ndarray = field(default=None, repr=False, compare=False)
    residuals: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def k(self) -> int:
        return len(self.names)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.coefficients[name] for name in self.names])

    def conf_int(self, name: str, level: float = 0.95) -> Tuple[float, float]:
        crit = stats.t.ppf(0.5 + level / 2, self.df_resid)
        half = crit * self.std_errors[name]
        return self.coefficients[name] - half, self.coefficients[name] + half

    def to_dict(self) -> dict:
        return {
            "coefficients": [
                {
                    "name": name,
                    "estimate": self.coefficients[name],
                    "std_error": self.std_errors[name],
                    "t": self.t_values[name],
                    "p": self.p_values[name],
                    "stars": stars(self.p_values[name]),
                }
                for name in self.names
            ],
            "rss": self.rss,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "df_resid": self.df_resid,
            "n": self.n,
            "cov_type": self.cov_type,
        }


def stars(p: float) -> str:
    """Significance marks: * 5%, ** 1%, *** 0.1%."""
    if not np.isfinite(p):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def t_cdf(t: float, df: float) -> float:
    """Student's t cumulative distribution function.

    Evaluated through the regularized incomplete beta function,
    P(T <= -|t|) = I_x(df/2, 1/2) / 2 with x = df / (df + t**2).
    """
    if not df >= 1:
        raise DomainError(f"t distribution needs df >= 1, got {df}")
    if np.isnan(t):
        return float("nan")
    if np.isinf(t):
        return 1.0 if t > 0 else 0.0
    lower_tail = 0.5 * special.betainc(df / 2.0, 0.5, df / (df + t * t))
    return float(1.0 - lower_tail if t > 0 else lower_tail)


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided p-value; computed from the tail directly to keep small values accurate."""
    if not df >= 1:
        raise DomainError(f"t distribution needs df >= 1, got {df}")
    if np.isnan(t):
        return float("nan")
    if np.isinf(t):
        return 0.0
    return float(min(1.0, special.betainc(df / 2.0, 0.5, df / (df + t * t))))


def _decompose(X: DesignMatrix):
    q, r, perm = linalg.qr(X.values, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > RANK_TOLERANCE * diag[0])) if diag[0] > 0 else 0
    if rank < X.k:
        dependent = X.names[perm[rank]]
        raise SingularDesignError(
            f"design is rank deficient ({rank} < {X.k}); {dependent!r} depends on other columns",
            column=dependent,
        )
    return q, r, perm


def _xtx_inverse(r: np.ndarray, perm: np.ndarray) -> np.ndarray:
    k = r.shape[0]
    r_inv = linalg.solve_triangular(r, np.eye(k))
    out = np.empty((k, k))
    out[np.ix_(perm, perm)] = r_inv @ r_inv.T
    return out


def xtx_inverse(X: DesignMatrix) -> np.ndarray:
    """(X'X)^-1 from the QR factors of X; raises on rank-deficient designs."""
    _, r, perm = _decompose(X)
    return _xtx_inverse(r, perm)


def ols_fit(X: DesignMatrix, y: Sequence[float], cov_type: CovType = "classical") -> RegressionFit:
    """Least squares fit of ``y`` on ``X`` through a pivoted QR decomposition."""
    y = np.asarray(y, dtype=float)
    n, k = X.n, X.k
    if y.shape != (n,):
        raise DomainError(f"y has shape {y.shape}, expected ({n},)")
    if not np.all(np.isfinite(y)):
        raise DomainError("y has non-finite entries")
    if n <= k:
        raise InsufficientDataError(f"{n} observations are not enough for {k} regressors")

    q, r, perm = _decompose(X)
    beta = np.empty(k)
    beta[perm] = linalg.solve_triangular(r, q.T @ y)

    fitted = X.values @ beta
    resid = y - fitted
    rss = float(resid @ resid)
    scale = EXACT_FIT_TOLERANCE * float(np.linalg.norm(y))
    if np.sqrt(rss) <= scale:
        # exact fit; coefficients at rounding-noise scale are zero
        noise = np.abs(beta) * np.linalg.norm(X.values, axis=0) <= scale
        beta[noise] = 0.0
        fitted = y.copy()
        resid = np.zeros(n)
        rss = 0.0
    df_resid = n - k

    xtx_inv = _xtx_inverse(r, perm)

    if cov_type == "classical":
        cov = rss / df_resid * xtx_inv
    elif cov_type == "hc1":
        meat = (X.values.T * resid**2) @ X.values
        cov = xtx_inv @ meat @ xtx_inv * (n / df_resid)
    else:
        raise DomainError(f"unknown cov_type {cov_type!r}")

    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.where(beta == 0, 0.0, np.copysign(np.inf, beta)))
    p = np.array([t_two_sided_p(tv, df_resid) for tv in t])

    if X.has_intercept:
        tss = float(np.sum((y - y.mean()) ** 2))
        df_total = n - 1
    else:
        tss = float(y @ y)
        df_total = n
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    r2 = float(min(1.0, max(0.0, r2)))
    adj_r2 = 1.0 - (1.0 - r2) * df_total / df_resid
    adj_r2 = float(min(adj_r2, r2))

    names = X.names
    return RegressionFit(
        names=names,
        coefficients=dict(zip(names, beta.tolist())),
        std_errors=dict(zip(names, se.tolist())),
        t_values=dict(zip(names, t.tolist())),
        p_values=dict(zip(names, p.tolist())),
        rss=rss,
        r2=r2,
        adj_r2=adj_r2,
        df_resid=df_resid,
        n=n,
        cov_type=cov_type,
        cov=cov,
        fitted=fitted,
        residuals=resid,
    )


def f_test_nested(
    full: RegressionFit, restricted: RegressionFit, q: Optional[int] = None
) -> Tuple[float, float]:
    """F-test of ``q`` linear restrictions taking ``full`` down to ``restricted``."""
    if q is None:
        q = full.k - restricted.k
    if q < 1:
        raise DomainError(f"the number of restrictions must be >= 1, got {q}")
    if full.n != restricted.n:
        raise NestingError(f"models fitted on different samples ({full.n} vs {restricted.n})")
    if not set(restricted.names) <= set(full.names):
        raise NestingError(f"{restricted.names} is not nested in {full.names}")

    tolerance = 1e-10 * max(restricted.rss, 1.0)
    diff = restricted.rss - full.rss
    if diff < -tolerance:
        raise NestingError(
            f"restricted RSS {restricted.rss:g} is below the full RSS {full.rss:g}"
        )
    diff = max(diff, 0.0)

    if full.rss == 0:
        if diff == 0:
            return 0.0, 1.0
        return float("inf"), 0.0

    f = (diff / q) / (full.rss / full.df_resid)
    return float(f), float(stats.f.sf(f, q, full.df_resid))
