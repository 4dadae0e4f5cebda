"""Symbol denoisers and soft-output computation.

Three denoisers are provided:

* BOX -- per-axis clipping onto the tightest box around the alphabet.
* Exact posterior mean -- the MMSE-optimal estimate of a PAM symbol under a
  Gaussian noise model, evaluated per axis with log-sum-exp stabilization.
* Piecewise-linear posterior mean -- a sum of clipped ramps that replaces
  the exponentials, parameterized by a slope ``rho`` and a half-spacing
  ``beta``. Its raw output lives on the odd-integer PAM grid; the detector
  rescales it by the constellation scale factor.

Both piecewise denoisers and the per-bit distance maps can be rendered as
slope/bias lookup tables (``PlmTable``), the evaluation form used by the
fixed-point model.

LLR sign convention, fixed package-wide: positive LLR means bit 1 is more
likely; ``llr_to_prob`` maps LLR to P(bit = 1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constellation import Constellation

XI_FLOOR_FACTOR = 1e-9


# ---------------------------------------------------------------------------
# denoisers

def box_denoise(v: np.ndarray, const: Constellation) -> np.ndarray:
    """Clip real and imaginary parts independently to the alphabet box."""
    a = const.max_amplitude
    return np.clip(np.real(v), -a, a) + 1j * np.clip(np.imag(v), -a, a)


def pme_exact(v_axis: np.ndarray, omega: float, beta: float,
              pam_points: np.ndarray) -> np.ndarray:
    """Posterior mean of a PAM symbol given v = beta*s + Gaussian noise.

    ``omega`` is the noise precision scale; output is a weighted average of
    ``pam_points``. Stabilized by subtracting the dominant exponent.
    """
    if omega <= 0 or beta <= 0:
        raise ValueError("omega and beta must be positive")
    v = np.asarray(v_axis, dtype=np.float64)
    d = -omega * (v[..., None] - beta * pam_points) ** 2
    d -= d.max(axis=-1, keepdims=True)
    w = np.exp(d)
    return (w @ pam_points) / w.sum(axis=-1)


def pme_piecewise(v_axis: np.ndarray, rho: float, beta: float, order: int,
                  method: str = "direct") -> np.ndarray:
    """Piecewise-linear posterior-mean approximation for sqrt(order)-PAM.

    Sum of clipped unit ramps centered at multiples of 2*beta; output spans
    the odd-integer grid [-(sqrt(order)-1), +(sqrt(order)-1)].
    """
    if rho <= 0 or beta <= 0:
        raise ValueError("rho and beta must be positive")
    if method == "table":
        return build_plm_table("pme", rho, beta, order=order)(v_axis)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    v = np.asarray(v_axis, dtype=np.float64)
    gamma = math.isqrt(order) // 2 - 1
    # summing the +k/-k ramps as pairs keeps the map exactly odd
    out = np.clip(rho * v, -1.0, 1.0)
    for k in range(1, gamma + 1):
        out = out + (np.clip(rho * (v + 2.0 * beta * k), -1.0, 1.0)
                     + np.clip(rho * (v - 2.0 * beta * k), -1.0, 1.0))
    return out


# ---------------------------------------------------------------------------
# slope/bias lookup tables

@dataclass
class PlmTable:
    """Piecewise-affine map evaluated as slope[bin] * x + bias[bin]."""

    boundaries: np.ndarray   # (n_bins - 1,) strictly increasing
    slopes: np.ndarray       # (n_bins,)
    biases: np.ndarray       # (n_bins,)
    mode: str

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.boundaries, x, side="right")
        return self.slopes[idx] * x + self.biases[idx]

    @property
    def n_bins(self) -> int:
        return self.slopes.size

    def to_text(self) -> str:
        return json.dumps(
            {"mode": self.mode,
             "boundaries": self.boundaries.tolist(),
             "slopes": self.slopes.tolist(),
             "biases": self.biases.tolist()},
            indent=2, sort_keys=True)

    @classmethod
    def from_text(cls, text: str) -> "PlmTable":
        d = json.loads(text)
        return cls(np.asarray(d["boundaries"], dtype=np.float64),
                   np.asarray(d["slopes"], dtype=np.float64),
                   np.asarray(d["biases"], dtype=np.float64),
                   d["mode"])


def _segment_probes(breaks: np.ndarray) -> np.ndarray:
    """One probe point inside every segment, including the two outer ones."""
    pad = 1.0 + (breaks[-1] - breaks[0])
    return np.concatenate([[breaks[0] - pad],
                           (breaks[:-1] + breaks[1:]) / 2.0,
                           [breaks[-1] + pad]])


def _table_from_breakpoints(breaks: np.ndarray, fn, slope_fn, mode: str) -> PlmTable:
    """Build a PlmTable for a piecewise-affine fn; slope_fn(probe) must return
    the exact slope of the segment containing the probe."""
    b = np.unique(breaks)
    probes = _segment_probes(b)
    slopes = slope_fn(probes)
    biases = fn(probes) - slopes * probes
    return PlmTable(b, slopes, biases, mode)


def build_plm_table(mode: str, rho: float | None = None,
                    beta: float | None = None,
                    const: Constellation | None = None,
                    order: int | None = None) -> PlmTable:
    """Render a denoiser as a slope/bias lookup table.

    ``box`` mode needs the constellation; ``pme`` mode needs (rho, beta) and
    the order (taken from the constellation when given).
    """
    mode = mode.lower()
    if mode == "box":
        if const is None:
            raise ValueError("box mode requires the constellation")
        a = const.max_amplitude
        return PlmTable(np.array([-a, a]),
                        np.array([0.0, 1.0, 0.0]),
                        np.array([-a, 0.0, a]), "box")
    if mode == "pme":
        if rho is None or beta is None:
            raise ValueError("pme mode requires rho and beta")
        if order is None:
            if const is None:
                raise ValueError("pme mode requires the order or a constellation")
            order = const.order
        gamma = math.isqrt(order) // 2 - 1
        shifts = 2.0 * beta * np.arange(-gamma, gamma + 1)
        breaks = np.concatenate([-1.0 / rho - shifts, 1.0 / rho - shifts])

        def fn(x):
            return pme_piecewise(x, rho, beta, order, method="direct")

        def slope_fn(x):
            x = np.asarray(x, dtype=np.float64)
            active = np.abs(rho * (x[..., None] + shifts)) < 1.0
            return rho * active.sum(axis=-1)

        return _table_from_breakpoints(np.sort(breaks), fn, slope_fn, "pme")
    raise ValueError(f"unknown table mode {mode!r}")


def build_llr_table(const: Constellation, axis_bit: int,
                    mu: float) -> PlmTable:
    """Per-axis bit metric min_{a0}(x - mu a0)^2 - min_{a1}(x - mu a1)^2 as a
    piecewise-linear table (the quadratic terms cancel on every segment)."""
    pam0, pam1 = const.pam_bit_values(axis_bit)

    def nearest(x, pts):
        return pts[np.argmin(np.abs(x[..., None] - mu * pts), axis=-1)]

    def fn(x):
        x = np.asarray(x, dtype=np.float64)
        d0 = np.min((x[..., None] - mu * pam0) ** 2, axis=-1)
        d1 = np.min((x[..., None] - mu * pam1) ** 2, axis=-1)
        return d0 - d1

    def slope_fn(x):
        # (x - mu a0)^2 - (x - mu a1)^2 = 2 mu (a1 - a0) x + mu^2 (a0^2 - a1^2)
        x = np.asarray(x, dtype=np.float64)
        return 2.0 * mu * (nearest(x, pam1) - nearest(x, pam0))

    # argmin switches at midpoints between scaled PAM points of each subset
    mids = []
    for pts in (pam0, pam1):
        sp = np.sort(mu * pts)
        if sp.size > 1:
            mids.append((sp[:-1] + sp[1:]) / 2.0)
    breaks = np.sort(np.concatenate(mids)) if mids else np.array([0.0])
    return _table_from_breakpoints(breaks, fn, slope_fn, "llr-distance")


# ---------------------------------------------------------------------------
# denoiser objects consumed by the equalizer

class BoxDenoiser:
    def __init__(self, const: Constellation):
        self.const = const

    def apply(self, v: np.ndarray, k: int) -> np.ndarray:
        return box_denoise(v, self.const)


class PmeDenoiser:
    """Per-iteration piecewise posterior-mean denoiser.

    Raw table output lies on the odd-integer grid; multiplying by the
    constellation scale puts the estimate back on the unit-energy symbol
    grid, so it saturates exactly at the box corners.
    """

    def __init__(self, const: Constellation, rho, beta, use_table: bool = True):
        self.const = const
        self.rho = np.atleast_1d(np.asarray(rho, dtype=np.float64))
        self.beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
        if self.rho.shape != self.beta.shape:
            raise ValueError("rho and beta schedules must have equal length")
        self.use_table = use_table
        if use_table:
            self.tables = [build_plm_table("pme", r, b, order=const.order)
                           for r, b in zip(self.rho, self.beta)]

    def _eval(self, x: np.ndarray, k: int) -> np.ndarray:
        if self.use_table:
            return self.tables[k](x)
        return pme_piecewise(x, self.rho[k], self.beta[k], self.const.order)

    def apply(self, v: np.ndarray, k: int) -> np.ndarray:
        if k >= self.rho.size:
            raise IndexError(f"no parameters for iteration {k}")
        c = self.const.scale
        return c * self._eval(np.real(v), k) + 1j * c * self._eval(np.imag(v), k)


def box_denoiser(const: Constellation) -> BoxDenoiser:
    return BoxDenoiser(const)


def pme_denoiser(const: Constellation, rho, beta,
                 use_table: bool = True) -> PmeDenoiser:
    return PmeDenoiser(const, rho, beta, use_table)


# ---------------------------------------------------------------------------
# soft outputs

@dataclass
class LlrParams:
    alpha: float
    mu: np.ndarray           # (U,) channel gains in (0, 1]
    xi: np.ndarray           # (U,) noise-plus-interference variances (floored)
    xi_floored: np.ndarray   # (U,) bool

    @classmethod
    def from_gram(cls, G: np.ndarray, N0: float, Es: float, alpha: float,
                  recip_fn=np.reciprocal,
                  floor_factor: float = XI_FLOOR_FACTOR) -> "LlrParams":
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        d = G.diagonal().real
        mu = d * recip_fn(d + alpha)
        xi = Es * (1.0 - mu) * mu
        floor = floor_factor * Es
        floored = xi < floor
        xi = np.maximum(xi, floor)
        return cls(float(alpha), mu, xi, floored)


@dataclass
class SoftOutput:
    llrs: np.ndarray         # (U, bits) or (U, bits, T)
    v_final: np.ndarray      # (U,) or (U, T)
    params: LlrParams
    flags: dict = field(default_factory=dict)


def _axis_llrs(x: np.ndarray, mu: np.ndarray, const: Constellation):
    """Per-axis bit metrics for every axis bit; x is (U,) or (U, T)."""
    out = []
    mu_b = mu if x.ndim == 1 else mu[:, None]
    for j in range(const.axis_bits):
        pam0, pam1 = const.pam_bit_values(j)
        d0 = np.min((x[..., None] - mu_b[..., None] * pam0) ** 2, axis=-1)
        d1 = np.min((x[..., None] - mu_b[..., None] * pam1) ** 2, axis=-1)
        out.append(d0 - d1)
    return out


def compute_llrs_with_params(v_final: np.ndarray, params: LlrParams,
                             const: Constellation, *, method: str = "axis",
                             recip_fn=np.reciprocal) -> SoftOutput:
    """Max-log LLRs from the unconstrained estimates and explicit gains.

    ``axis`` exploits the per-axis Gray labeling (sqrt(Q)-point scans);
    ``exhaustive`` scans the full alphabet and serves as the reference.
    """
    v = np.asarray(v_final, dtype=np.complex128)
    mu, xi = params.mu, params.xi
    m = const.bits_per_symbol
    inv_xi = recip_fn(xi)
    inv_xi_b = inv_xi if v.ndim == 1 else inv_xi[:, None]

    if method == "axis":
        re_metrics = _axis_llrs(v.real, mu, const)
        im_metrics = _axis_llrs(v.imag, mu, const)
        metrics = re_metrics + im_metrics
        llrs = np.stack([d * inv_xi_b for d in metrics], axis=1)
    elif method == "exhaustive":
        mu_b = mu if v.ndim == 1 else mu[:, None]
        dist = np.abs(v[..., None] - mu_b[..., None] * const.points) ** 2
        if v.ndim == 2:
            dist = np.moveaxis(dist, -1, 1)  # (U, Q, T)
        cols = []
        for b in range(m):
            i0, i1 = const.bit_subsets[b]
            d0 = dist[:, i0].min(axis=1)
            d1 = dist[:, i1].min(axis=1)
            cols.append((d0 - d1) * inv_xi_b)
        llrs = np.stack(cols, axis=1)
    else:
        raise ValueError(f"unknown method {method!r}")

    flags = {"xi_floored": int(params.xi_floored.sum())}
    return SoftOutput(llrs, v, params, flags)


def compute_llrs(v_final: np.ndarray, G: np.ndarray, N0: float, Es: float,
                 alpha: float, const: Constellation, *, method: str = "axis",
                 recip_fn=np.reciprocal) -> SoftOutput:
    """Max-log LLRs with Neumann-approximated gains mu = G_uu / (G_uu + alpha)."""
    params = LlrParams.from_gram(G, N0, Es, alpha, recip_fn)
    return compute_llrs_with_params(v_final, params, const, method=method,
                                    recip_fn=recip_fn)


def llr_to_prob(llr: np.ndarray) -> np.ndarray:
    """P(bit = 1) from an LLR under the package sign convention."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(llr, dtype=np.float64)))


# ---------------------------------------------------------------------------
# fidelity tracking between the exact and piecewise posterior means

def fit_omega(rho: float, beta: float, const: Constellation,
              span: float = 1.5, n_grid: int = 2001) -> float:
    """Least-squares fit of the exact posterior mean's precision to the
    piecewise approximation, over span * the alphabet box."""
    from scipy.optimize import minimize_scalar

    a = const.max_amplitude * span
    x = np.linspace(-a, a, n_grid)
    target = const.scale * pme_piecewise(x, rho, beta, const.order)
    beta_eff = beta / const.scale

    def cost(log_w):
        w = math.exp(log_w)
        return float(np.mean((pme_exact(x, w, beta_eff, const.pam_points) - target) ** 2))

    res = minimize_scalar(cost, bounds=(-6.0, 12.0), method="bounded")
    return math.exp(res.x)


def pme_fidelity(rho: float, beta: float, const: Constellation,
                 span: float = 1.5, n_grid: int = 4001) -> dict:
    """Sup-norm gap between the piecewise and exact posterior means with the
    fitted precision; tracked as a diagnostic, no hard bound asserted."""
    omega = fit_omega(rho, beta, const, span)
    a = const.max_amplitude * span
    x = np.linspace(-a, a, n_grid)
    approx = const.scale * pme_piecewise(x, rho, beta, const.order)
    exact = pme_exact(x, omega, beta / const.scale, const.pam_points)
    return {"omega": omega, "sup_gap": float(np.max(np.abs(approx - exact)))}
