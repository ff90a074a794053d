"""Parameter bundles for the reconstruction algorithms.

One aggregate :class:`ReconstructionParams` feeds all four algorithms so the
CLI exposes a single configuration surface.  Defaults follow the canonical
published values for the smoothing constants; everything is tunable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .grid import KMH, V_CEIL, V_FLOOR, DomainError


@dataclass(frozen=True)
class KernelParams:
    """Anisotropic smoothing kernel along a characteristic wave speed."""

    wave_speed: float  # m/s, signed; negative = upstream-moving
    sigma: float  # spatial width, m
    tau: float  # temporal width, s
    stationary: bool = False  # temporal-only smoothing (no wave direction)

    def __post_init__(self):
        if self.sigma <= 0 or self.tau <= 0:
            raise DomainError("kernel widths must be positive")
        if not self.stationary and self.wave_speed == 0:
            raise DomainError("non-stationary kernels need a nonzero wave speed")


@dataclass(frozen=True)
class BtWeightParams:
    """Speed bounds and sensitivity for travel-time trust weighting."""

    v_min: float = 5.0 * KMH  # m/s
    v_max: float = 130.0 * KMH  # m/s
    gamma: float = 500_000.0  # m*s

    def __post_init__(self):
        if not (0 < self.v_min < self.v_max):
            raise DomainError("need 0 < v_min < v_max")
        if self.gamma <= 0:
            raise DomainError("gamma must be positive")


@dataclass(frozen=True)
class ReconstructionParams:
    # shared smoothing constants
    sigma: float = 600.0  # m
    tau: float = 60.0  # s
    c_cong: float = -15.0 * KMH  # m/s
    c_free: float = 80.0 * KMH  # m/s
    v_thr: float = 60.0 * KMH  # m/s, adaptive-weight threshold
    delta_v: float = 20.0 * KMH  # m/s, adaptive-weight steepness
    truncate: float = 3.0  # kernel support radius in units of sigma/tau
    # the adaptive blend is applied to inverse speeds by default, consistent
    # with the inverse-speed smoothing regime; set False to blend raw speeds
    combine_inverse_speed: bool = True

    # phase classification (logistic memberships on pilot speeds)
    free_boundary: float = 80.0 * KMH  # free/synchronized membership centre
    wmj_boundary: float = 25.0 * KMH  # synchronized/jam membership centre
    membership_steepness: float = 10.0 * KMH
    sigma_sync: float = 300.0  # narrow spatial support of the stationary pilot
    # kernel for synchronized-phase data in the second smoothing step:
    # congested by default, stationary behind this flag
    sync_smooth_stationary: bool = False

    # travel-time trust weighting
    bt: BtWeightParams = field(default_factory=BtWeightParams)

    # section averaging
    secavg_fill_speed: float = 100.0 * KMH  # for sections never crossed

    # storage clamp applied to algorithm outputs
    v_floor: float = V_FLOOR
    v_ceil: float = V_CEIL

    def congested_kernel(self) -> KernelParams:
        return KernelParams(self.c_cong, self.sigma, self.tau)

    def free_kernel(self) -> KernelParams:
        return KernelParams(self.c_free, self.sigma, self.tau)

    def sync_pilot_kernel(self) -> KernelParams:
        return KernelParams(0.0, self.sigma_sync, self.tau, stationary=True)

    def sync_smooth_kernel(self) -> KernelParams:
        if self.sync_smooth_stationary:
            return self.sync_pilot_kernel()
        return self.congested_kernel()

    def with_(self, **changes) -> "ReconstructionParams":
        return replace(self, **changes)


DEFAULT_PARAMS = ReconstructionParams()
