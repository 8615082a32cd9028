"""Time-indexed degradation operator families with forward transition maps.

All processes here are affine in the signal: apply(t, x) = A(t) x + b(t),
with a dense matrix view available for oracles and consistency solvers.
Severities compose through transition maps G_{t' -> t''}; inpainting composes
exactly, blur only up to the declared tolerance (sampled truncated Gaussian
kernels add widths in quadrature only approximately).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

from .core import GaussianPrior, RandomSource, Signal, prior_sample
from .schedule import SeveritySchedule, linear_schedule

__all__ = [
    "DegradationProcess",
    "GaussianBlurProcess",
    "GaussianMaskInpaintProcess",
    "BlendingProcess",
    "blur_kernel",
    "inpaint_mask",
    "lipschitz_t_estimate",
]

# Kernel widths below this are treated as a unit impulse.
_IMPULSE_WIDTH = 1e-3
# Mask denominators at or below this are treated as fully masked.
_MASK_GUARD = 1e-12


class DegradationProcess(ABC):
    """Severity-indexed operator family A_t with forward transitions."""

    #: max-norm tolerance for the composition identity apply(t'') == G(apply(t'))
    composition_tol: float = 1e-12
    #: relative tolerance for apply(0, x) ~ x
    identity_tol: float = 1e-12

    @abstractmethod
    def apply(self, t: float, x: Signal) -> Signal:
        """Degrade x at severity t in [0,1]."""

    @abstractmethod
    def transition(self, t_lo: float, t_hi: float, y: Signal) -> Signal:
        """Forward transition G_{t_lo -> t_hi} taking A_{t_lo}(x) to A_{t_hi}(x)."""

    @abstractmethod
    def as_matrix(self, t: float) -> np.ndarray:
        """Dense n x n linear part of the operator at severity t."""

    def offset(self, t: float) -> np.ndarray:
        """Constant part of the operator; zero for linear processes."""
        return np.zeros(self.n)

    @abstractmethod
    def param_of(self, t: float) -> float:
        """Physical operator parameter w_t after scheduling."""

    @property
    @abstractmethod
    def shape(self) -> tuple[int, ...]:
        """Signal shape this process operates on."""

    @property
    def n(self) -> int:
        return math.prod(self.shape)

    def lipschitz_x(self, t: float) -> float:
        """Spectral norm of the linear part via power iteration."""
        m = self.as_matrix(t)
        v = np.ones(m.shape[0]) + 1e-4 * np.arange(m.shape[0])
        v /= np.linalg.norm(v)
        prev = 0.0
        for _ in range(50):
            w = m.T @ (m @ v)
            norm = np.linalg.norm(w)
            if norm == 0.0:
                return 0.0
            # Rayleigh-quotient estimate: squared convergence rate compared
            # to the iterate norm, which matters when the top eigenvalues of
            # M^T M nearly coincide.
            est = math.sqrt(max(float(v @ w), 0.0))
            v = w / norm
            if abs(est - prev) <= 1e-8 * max(est, 1.0):
                return est
            prev = est
        raise RuntimeError("power iteration did not converge in 50 iterations")

    def _check_range(self, t: float) -> None:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"severity {t} outside [0,1]")


def lipschitz_t_estimate(
    proc: DegradationProcess,
    t_lo: float,
    t_hi: float,
    prior: GaussianPrior,
    probes: int,
    rng: RandomSource,
) -> float:
    """Probe-based lower estimate of the temporal Lipschitz constant L_t.

    Maximizes ||A_{t_lo} x - A_{t_hi} x|| / |t_hi - t_lo| over prior samples;
    the true constant can only be larger.
    """
    if not t_lo < t_hi:
        raise ValueError("requires t_lo < t_hi")
    best = 0.0
    for i in range(probes):
        x = prior_sample(prior, rng.split(i))
        diff = proc.apply(t_lo, x).values - proc.apply(t_hi, x).values
        best = max(best, float(np.linalg.norm(diff)) / (t_hi - t_lo))
    return best


def blur_kernel(w: float, size: int) -> np.ndarray:
    """Sampled Gaussian kernel exp(-i^2 / 2w^2) on a centered odd grid, sum 1."""
    if size % 2 == 0 or size < 3:
        raise ValueError(f"kernel size must be odd and >= 3, got {size}")
    if w <= 0:
        raise ValueError(f"kernel width must be positive, got {w}")
    kernel = np.zeros(size)
    if w < _IMPULSE_WIDTH:
        kernel[size // 2] = 1.0
        return kernel
    i = np.arange(size) - size // 2
    kernel = np.exp(-(i.astype(np.float64) ** 2) / (2.0 * w * w))
    return kernel / kernel.sum()


def _circulant_from_kernel(kernel: np.ndarray, length: int) -> np.ndarray:
    """1-D circular-convolution matrix; kernel taps wrap modulo the axis length."""
    half = kernel.size // 2
    wrapped = np.zeros(length)
    for tap, offset in zip(kernel, range(-half, half + 1)):
        wrapped[offset % length] += tap
    cols = np.arange(length)
    return wrapped[(cols[:, None] - cols[None, :]) % length]


class GaussianBlurProcess(DegradationProcess):
    """Separable circular Gaussian blur with severity-scheduled kernel width.

    Following the reference setup, a residual width w_min is kept at t=0, so
    A_0 is only approximately the identity; identity_tol reflects the measured
    relative deviation on prior samples. Widths add in quadrature under
    composition, so transitions blur by sqrt(w''^2 - w'^2).
    """

    composition_tol = 1e-3
    identity_tol = 0.05

    def __init__(
        self,
        shape: tuple[int, ...],
        schedule: SeveritySchedule | None = None,
        w_min: float = 0.3,
        w_max: float = 3.0,
        kernel_size: int | None = None,
    ):
        self._shape = tuple(int(s) for s in shape)
        if schedule is None:
            schedule = linear_schedule(w_min, w_max)
        self.schedule = schedule
        self.w_min = schedule.knots[0][1]
        self.w_max = schedule.knots[-1][1]
        if kernel_size is None:
            kernel_size = min(61, 2 * math.ceil(4.0 * self.w_max) + 1)
        if kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")
        self.kernel_size = kernel_size
        self._circ_cache: dict[tuple[float, int], np.ndarray] = {}

    @property
    def shape(self) -> tuple[int, ...]:
        return self._shape

    def param_of(self, t: float) -> float:
        return self.schedule.interpolate(t)

    def _circulant(self, w: float, length: int) -> np.ndarray:
        key = (w, length)
        if key not in self._circ_cache:
            if w < _IMPULSE_WIDTH:
                self._circ_cache[key] = np.eye(length)
            else:
                self._circ_cache[key] = _circulant_from_kernel(
                    blur_kernel(w, self.kernel_size), length
                )
        return self._circ_cache[key]

    def _blur_width(self, w: float, x: Signal) -> Signal:
        arr = x.as_array()
        if arr.ndim == 1:
            out = self._circulant(w, arr.shape[0]) @ arr
        else:
            out = self._circulant(w, arr.shape[0]) @ arr @ self._circulant(w, arr.shape[1]).T
        return x.with_values(out)

    def apply(self, t: float, x: Signal) -> Signal:
        self._check_range(t)
        return self._blur_width(self.param_of(t), x)

    def transition(self, t_lo: float, t_hi: float, y: Signal) -> Signal:
        if t_lo > t_hi:
            raise ValueError("transition requires t_lo <= t_hi")
        w_lo, w_hi = self.param_of(t_lo), self.param_of(t_hi)
        if w_hi <= w_lo:
            return y
        return self._blur_width(math.sqrt(w_hi * w_hi - w_lo * w_lo), y)

    def as_matrix(self, t: float) -> np.ndarray:
        self._check_range(t)
        w = self.param_of(t)
        if len(self._shape) == 1:
            return self._circulant(w, self._shape[0])
        return np.kron(self._circulant(w, self._shape[0]), self._circulant(w, self._shape[1]))


def inpaint_mask(w: float, k: int, shape: tuple[int, ...], center=None) -> Signal:
    """Smooth inpainting mask (1 - f/max f)^k from an isotropic Gaussian bump f.

    w = 0 returns all ones (identity mask); the mask is 0 at the bump's peak
    for any w > 0 and entrywise non-increasing in w.
    """
    if w < 0:
        raise ValueError("mask width must be non-negative")
    if k < 1:
        raise ValueError("sharpness exponent must be >= 1")
    shape = tuple(int(s) for s in shape)
    if w == 0.0:
        return Signal(np.ones(math.prod(shape)), shape)
    if center is None:
        center = tuple(s // 2 for s in shape)
    if len(shape) == 1:
        d2 = (np.arange(shape[0]) - center[0]) ** 2
    else:
        ii, jj = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
        d2 = (ii - center[0]) ** 2 + (jj - center[1]) ** 2
    f = np.exp(-d2.astype(np.float64) / (2.0 * w * w))
    mask = (1.0 - f / f.max()) ** k
    return Signal(mask.ravel(), shape)


class GaussianMaskInpaintProcess(DegradationProcess):
    """Diagonal masking with a smooth Gaussian-bump mask growing with severity.

    M_0 is the identity (w(0)=0) and transitions divide masks entrywise, so
    composition is exact up to rounding; this is the designated process for
    exactness-sensitive checks.
    """

    composition_tol = 1e-12
    identity_tol = 1e-12

    def __init__(
        self,
        shape: tuple[int, ...],
        schedule: SeveritySchedule | None = None,
        k: int = 4,
        w_final: float | None = None,
        center=None,
    ):
        self._shape = tuple(int(s) for s in shape)
        if w_final is None:
            w_final = 0.2 * max(self._shape)
        if schedule is None:
            schedule = linear_schedule(0.0, w_final)
        if schedule.knots[0][1] != 0.0:
            raise ValueError("inpainting schedule must start at w=0 (identity mask)")
        self.schedule = schedule
        self.k = int(k)
        self.w_final = schedule.knots[-1][1]
        self.center = center
        self._mask_cache: dict[float, np.ndarray] = {}

    @property
    def shape(self) -> tuple[int, ...]:
        return self._shape

    def param_of(self, t: float) -> float:
        return self.schedule.interpolate(t)

    def mask(self, t: float) -> Signal:
        self._check_range(t)
        w = self.param_of(t)
        if w not in self._mask_cache:
            self._mask_cache[w] = inpaint_mask(w, self.k, self._shape, self.center).values
        return Signal(self._mask_cache[w], self._shape)

    def apply(self, t: float, x: Signal) -> Signal:
        return x.with_values(self.mask(t).values * x.values)

    def transition(self, t_lo: float, t_hi: float, y: Signal) -> Signal:
        if t_lo > t_hi:
            raise ValueError("transition requires t_lo <= t_hi")
        m_lo = self.mask(t_lo).values
        m_hi = self.mask(t_hi).values
        out = np.zeros_like(y.values)
        live = m_lo > _MASK_GUARD
        out[live] = y.values[live] * m_hi[live] / m_lo[live]
        return y.with_values(out)

    def as_matrix(self, t: float) -> np.ndarray:
        return np.diag(self.mask(t).values)

    def lipschitz_x(self, t: float) -> float:
        return float(np.max(self.mask(t).values))


class BlendingProcess(DegradationProcess):
    """Severity as convex blending toward a fixed anchor measurement.

    A_t(x) = t * anchor + (1-t) * x: affine with linear part (1-t) I. The
    degradation operator's analytic form is never used, which is the point
    of this parametrization.
    """

    composition_tol = 1e-12
    identity_tol = 1e-12

    def __init__(self, anchor: Signal):
        self.anchor = anchor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.anchor.shape

    def param_of(self, t: float) -> float:
        self._check_range(t)
        return float(t)

    def apply(self, t: float, x: Signal) -> Signal:
        self._check_range(t)
        return x.with_values(t * self.anchor.values + (1.0 - t) * x.values)

    def transition(self, t_lo: float, t_hi: float, y: Signal) -> Signal:
        if t_lo > t_hi:
            raise ValueError("transition requires t_lo <= t_hi")
        if t_lo == t_hi:
            return y
        if t_lo == 1.0:
            return y
        # Recover x from y = t'*anchor + (1-t')*x, then re-blend at t''.
        scale = (1.0 - t_hi) / (1.0 - t_lo)
        return y.with_values(
            t_hi * self.anchor.values + scale * (y.values - t_lo * self.anchor.values)
        )

    def as_matrix(self, t: float) -> np.ndarray:
        self._check_range(t)
        return (1.0 - t) * np.eye(self.n)

    def offset(self, t: float) -> np.ndarray:
        return t * self.anchor.values

    def lipschitz_x(self, t: float) -> float:
        self._check_range(t)
        return 1.0 - t
