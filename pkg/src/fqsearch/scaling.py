"""Power-law fits across stages and the scaling hypotheses built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import InsufficientPoints, NonPositiveValue

CRITICAL_BAND = 0.15


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    stderr: float
    intercept: float
    points: tuple
    residuals: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "stderr": None if math.isnan(self.stderr) else self.stderr,
            "intercept": self.intercept,
            "points": [list(p) for p in self.points],
            "residuals": list(self.residuals),
        }


def _loglog(points, allow_two_point: bool):
    pts = [(float(n), float(v)) for n, v in points]
    need = 2 if allow_two_point else 3
    if len(pts) < need:
        raise InsufficientPoints(f"need at least {need} points, got {len(pts)}")
    n = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(n <= 0) or np.any(v <= 0):
        raise NonPositiveValue("power-law fits need positive N and values")
    if len(np.unique(n)) != len(n):
        raise InsufficientPoints("N values must be distinct")
    return pts, n, v


def _ols(x, y):
    """Slope, slope stderr, intercept and residuals; stderr is nan for two points."""
    if len(x) == 2:
        slope = (y[1] - y[0]) / (x[1] - x[0])
        intercept = y[0] - slope * x[0]
        return slope, math.nan, intercept, np.zeros(2)
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    return fit.slope, fit.stderr, fit.intercept, resid


def fit_power_law(points, allow_two_point: bool = False) -> ScalingFit:
    """OLS of ln(value) on ln(N); the exponent is the slope.

    Decaying quantities such as P_max come out with a negative exponent; the
    caller negates it to get alpha.
    """
    pts, n, v = _loglog(points, allow_two_point)
    slope, err, icpt, resid = _ols(np.log(n), np.log(v))
    return ScalingFit(float(slope), float(err), float(icpt), tuple(pts),
                      tuple(float(r) for r in resid))


@dataclass(frozen=True)
class LogCorrectionFit:
    epsilon: float
    stderr: float
    intercept: float
    points: tuple

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon,
                "stderr": None if math.isnan(self.stderr) else self.stderr,
                "intercept": self.intercept, "points": [list(p) for p in self.points]}


def fit_log_correction(points) -> LogCorrectionFit:
    """Fit Q = c sqrt(N) ln(N)^eps via OLS of ln(Q/sqrt N) on ln ln N."""
    pts, n, q = _loglog(points, allow_two_point=False)
    if np.any(n <= math.e):
        raise NonPositiveValue("log-correction fits need N > e so that ln ln N is defined")
    slope, err, icpt, _ = _ols(np.log(np.log(n)), np.log(q / np.sqrt(n)))
    return LogCorrectionFit(float(slope), float(err), float(icpt), tuple(pts))


def _quad(*terms) -> float:
    return math.sqrt(sum(t * t for t in terms))


@dataclass
class HypothesisReport:
    beta: float
    beta_err: float
    alpha: float
    alpha_err: float
    gamma: float
    gamma_err: float
    d_s: float
    d_s_err: float
    d_f: float
    d_e: int
    s: int
    s_prime: int
    predictions: dict
    deltas: dict
    regime: str
    label: str = ""

    def to_dict(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        out = {k: clean(v) for k, v in self.__dict__.items() if k not in ("predictions", "deltas")}
        out["predictions"] = {k: [clean(a) for a in v] for k, v in self.predictions.items()}
        out["deltas"] = {k: [clean(a) for a in v] for k, v in self.deltas.items()}
        return out


def regime(d_s: float) -> str:
    if abs(d_s - 2.0) < CRITICAL_BAND:
        return "critical"
    return "inverse-spectral" if d_s < 2.0 else "grover"


def evaluate_hypotheses(beta: ScalingFit, alpha: ScalingFit, lattice_metrics, d_s: float,
                        d_s_err: float = 0.0, s: int | None = None,
                        s_prime: int | None = None, label: str = "") -> HypothesisReport:
    """Compare fitted exponents with every scaling conjecture.

    ``alpha`` is the fit of P_max against N, so alpha = -exponent.  Each
    prediction and delta is a ``(value, error)`` pair; errors add in
    quadrature and treat d_f and s as exact.
    """
    b, be = beta.exponent, beta.stderr
    a, ae = -alpha.exponent, alpha.stderr
    g = b + a / 2.0
    ge = _quad(be, ae / 2.0)
    d_e = lattice_metrics.d_e
    d_f = lattice_metrics.d_f
    if s is None or s_prime is None:
        raise ValueError("s and s_prime are required")
    inv = 1.0 / d_s
    inv_err = d_s_err / d_s**2
    g1 = d_s / (d_e - 1) + d_f - s
    g1e = d_s_err / (d_e - 1)
    g2 = 0.5 * (d_s / (d_e - 1) + d_f - s / s_prime)
    g2e = 0.5 * d_s_err / (d_e - 1)
    alpha_pred = 2 * b - 1
    predictions = {
        "invDs": (inv, inv_err),
        "half": (0.5, 0.0),
        "alphaPred": (alpha_pred, 2 * be),
        "gammaPrime": (g1, g1e),
        "gammaDoublePrime": (g2, g2e),
    }
    deltas = {
        "betaMinusInvDs": (b - inv, _quad(be, inv_err)),
        "betaMinusHalf": (b - 0.5, be),
        "alphaMinus2BetaPlus1": (a - 2 * b + 1, _quad(ae, 2 * be)),
        "gammaMinusGammaPrime": (g - g1, _quad(ge, g1e)),
        "gammaMinusGammaDoublePrime": (g - g2, _quad(ge, g2e)),
    }
    return HypothesisReport(
        beta=b, beta_err=be, alpha=a, alpha_err=ae, gamma=g, gamma_err=ge,
        d_s=d_s, d_s_err=d_s_err, d_f=d_f, d_e=d_e, s=s, s_prime=s_prime,
        predictions=predictions, deltas=deltas, regime=regime(d_s), label=label,
    )


def integer_dimension_bound(N: float, d: float) -> float:
    """max{d N^(1/d), pi sqrt(N)/4}: lower bound on Q for hypercubic lattices."""
    return max(d * N ** (1.0 / d), math.pi * math.sqrt(N) / 4.0)


def spectral_bound(N: float, d_s: float) -> float:
    """max{N^(1/d_s), pi sqrt(N)/4}: conjectured lower bound on Q for fractals."""
    return max(N ** (1.0 / d_s), math.pi * math.sqrt(N) / 4.0)
