"""FSO backhaul and RF access channel models.

FSO link gain is the product of three losses: deterministic atmospheric
attenuation (Beer-Lambert with a Kruse visibility exponent), atmospheric
turbulence drawn from an exponentiated Weibull law, and a pointing-error
loss drawn from a bounded power law.  The composite gain enters the IM/DD
rate law

    rate(p, tau) = tau * B/(2 ln 2) * ln(1 + g * (p/tau)^2),
    g = e * responsivity^2 * h^2 / (2 pi sigma_fso^2),

whose exact inverse gives the minimum transmit power for a target rate, and
whose high-SNR approximation yields the perspective-form link power used by
the routing program.

RF access channels combine free-space path loss with Rician small-scale
fading on an M-antenna array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass
class FsoParams:
    """Optical backhaul parameters.

    visibility_km: meteorological visibility driving attenuation.
    wavelength_nm: optical carrier wavelength.
    responsivity:  photodetector responsivity (A/W).
    sigma2_fso:    optical receiver noise variance.
    weibull_phi / weibull_varsigma / weibull_scale: exponentiated-Weibull
        turbulence shape/shape/scale.
    sigma0_rad:    angular pointing-error standard deviation.
    beamwidth_rad: angular beamwidth.
    aperture_radius_m: receiver aperture radius.
    bandwidth_hz:  FSO bandwidth.
    p_max_w:       maximum FSO transmit power.
    """

    visibility_km: float = 6.0
    wavelength_nm: float = 1550.0
    responsivity: float = 0.6
    sigma2_fso: float = 1e-14
    weibull_phi: float = 3.21
    weibull_varsigma: float = 1.25
    weibull_scale: float = 0.94
    sigma0_rad: float = 20e-3
    beamwidth_rad: float = 40e-3
    aperture_radius_m: float = 0.4
    bandwidth_hz: float = 10e9
    # The power cap must clear the burst power 1/sqrt(g) of the worst link;
    # full-scale gains are ~1e-28, so the uncalibrated default is generous.
    p_max_w: float = 1e18

    def validate(self) -> None:
        for name in (
            "visibility_km", "wavelength_nm", "responsivity", "sigma2_fso",
            "weibull_phi", "weibull_varsigma", "weibull_scale", "sigma0_rad",
            "beamwidth_rad", "aperture_radius_m", "bandwidth_hz", "p_max_w",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


def kruse_coefficient(visibility_km: float) -> float:
    """Visibility exponent of the Kruse attenuation model."""
    if visibility_km <= 0:
        raise ValueError("visibility must be positive")
    if visibility_km > 50.0:
        return 1.6
    if visibility_km >= 6.0:
        return 1.3
    return 0.585 * visibility_km ** (1.0 / 3.0)


def attenuation(dist_m, params: FsoParams):
    """Atmospheric attenuation loss over a link of the given length.

    exp(-(0.0009 / visibility) * (wavelength / 550)^kappa * d), d in meters.
    """
    dist_m = np.asarray(dist_m, dtype=float)
    if np.any(dist_m < 0):
        raise ValueError("distance must be non-negative")
    kappa = kruse_coefficient(params.visibility_km)
    coeff = (0.0009 / params.visibility_km) * (params.wavelength_nm / 550.0) ** kappa
    out = np.exp(-coeff * dist_m)
    return float(out) if out.ndim == 0 else out


def turbulence_cdf(h, params: FsoParams):
    """Exponentiated-Weibull CDF: [1 - exp(-(h/scale)^varsigma)]^phi."""
    h = np.asarray(h, dtype=float)
    return (1.0 - np.exp(-((h / params.weibull_scale) ** params.weibull_varsigma))) ** params.weibull_phi


def turbulence_pdf(h, params: FsoParams):
    """Exponentiated-Weibull density (derivative of `turbulence_cdf`)."""
    h = np.asarray(h, dtype=float)
    phi, var, eps = params.weibull_phi, params.weibull_varsigma, params.weibull_scale
    z = (h / eps) ** var
    return (phi * var / eps) * (h / eps) ** (var - 1.0) * np.exp(-z) * (1.0 - np.exp(-z)) ** (phi - 1.0)


def sample_turbulence(params: FsoParams, rng: np.random.Generator, size=None):
    """Draw turbulence losses by inverting the exponentiated-Weibull CDF.

    h = scale * (-ln(1 - u^(1/phi)))^(1/varsigma), u ~ U(0, 1).
    """
    u = rng.uniform(size=size)
    inner = -np.log1p(-(u ** (1.0 / params.weibull_phi)))
    return params.weibull_scale * inner ** (1.0 / params.weibull_varsigma)


def pointing_support_max(params: FsoParams, upsilon_m) -> float:
    """Upper end of the pointing-loss support: aperture^2 / (2 beamwidth^2 dist^2)."""
    upsilon_m = np.asarray(upsilon_m, dtype=float)
    out = params.aperture_radius_m**2 / (2.0 * params.beamwidth_rad**2 * upsilon_m**2)
    return float(out) if out.ndim == 0 else out


def pointing_pdf(h, params: FsoParams, upsilon_m):
    """Pointing-loss density: a power law with exponent (beamwidth/sigma0)^2 - 1.

    The exponent is the unique power that normalizes the density over its
    support [0, aperture^2 / (2 beamwidth^2 dist^2)).
    """
    h = np.asarray(h, dtype=float)
    h_max = pointing_support_max(params, upsilon_m)
    a = (params.beamwidth_rad / params.sigma0_rad) ** 2
    out = np.where((h >= 0) & (h < h_max), (a / h_max) * (h / h_max) ** (a - 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def sample_pointing(params: FsoParams, upsilon_m, rng: np.random.Generator, size=None):
    """Draw pointing losses: h = h_max * u^(sigma0^2 / beamwidth^2)."""
    upsilon_m = np.asarray(upsilon_m, dtype=float)
    if np.any(upsilon_m <= 0):
        raise ValueError("transmission distance must be positive")
    u = rng.uniform(size=size)
    exponent = (params.sigma0_rad / params.beamwidth_rad) ** 2
    return pointing_support_max(params, upsilon_m) * u**exponent


def link_gain_factor(h, params: FsoParams):
    """g = e * responsivity^2 * h^2 / (2 pi sigma_fso^2) from the composite gain h."""
    h = np.asarray(h, dtype=float)
    out = np.e * params.responsivity**2 * h**2 / (2.0 * np.pi * params.sigma2_fso)
    return float(out) if out.ndim == 0 else out


@dataclass
class FsoLinkState:
    """Per-link channel snapshot for one slot (all arrays of length L)."""

    h_al: np.ndarray
    h_at: np.ndarray
    h_pl: np.ndarray
    h: np.ndarray = field(init=False)
    g: np.ndarray = field(init=False)

    def __init__(self, h_al, h_at, h_pl, params: FsoParams):
        self.h_al = np.asarray(h_al, dtype=float)
        self.h_at = np.asarray(h_at, dtype=float)
        self.h_pl = np.asarray(h_pl, dtype=float)
        self.h = self.h_al * self.h_at * self.h_pl
        self.g = link_gain_factor(self.h, params)


def sample_fso_links(topology, params: FsoParams, rng: np.random.Generator) -> FsoLinkState:
    """Draw a fresh FSO channel snapshot for every backhaul link."""
    dists = topology.link_distances()
    h_al = attenuation(dists, params)
    h_at = sample_turbulence(params, rng, size=len(dists))
    h_pl = sample_pointing(params, dists, rng, size=len(dists))
    return FsoLinkState(h_al, h_at, h_pl, params)


def fso_rate(p_w, tau, g, params: FsoParams):
    """Data rate carried by a link transmitting at slot-average power p over fraction tau."""
    p_w = np.asarray(p_w, dtype=float)
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        burst = np.where(tau > 0, p_w / np.where(tau > 0, tau, 1.0), 0.0)
        out = np.where(tau > 0, tau * params.bandwidth_hz / (2.0 * np.log(2)) * np.log1p(g * burst**2), 0.0)
    return float(out) if out.ndim == 0 else out


def fso_power_for_rate(gamma, tau, g, params: FsoParams):
    """Minimum slot-average power for rate gamma over time fraction tau.

    p = sqrt(tau^2 / g * (exp(2 ln2 gamma / (B tau)) - 1)); zero rate needs
    zero power, and a positive rate with tau = 0 is infeasible.
    """
    gamma = np.asarray(gamma, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any((gamma > 0) & (tau == 0)):
        raise ValueError("infeasible: positive rate with zero time fraction")
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(tau > 0, 2.0 * np.log(2) * gamma / (params.bandwidth_hz * np.where(tau > 0, tau, 1.0)), 0.0)
        out = np.where((tau > 0) & (gamma > 0), np.sqrt(tau**2 / g * np.expm1(expo)), 0.0)
    return float(out) if out.ndim == 0 else out


def approx_link_power(gamma, tau, g, params: FsoParams):
    """High-SNR link power in perspective form: tau * f(gamma / tau).

    f(x) = exp(x ln2 / B) / sqrt(g); the zero branch covers tau = 0 or
    gamma = 0.  Jointly convex in (gamma, tau).
    """
    gamma = np.asarray(gamma, dtype=float)
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(tau > 0, gamma / np.where(tau > 0, tau, 1.0), 0.0)
        out = np.where(
            (tau > 0) & (gamma > 0),
            tau / np.sqrt(g) * np.exp(x * np.log(2) / params.bandwidth_hz),
            0.0,
        )
    return float(out) if out.ndim == 0 else out


@dataclass
class RfParams:
    """RF access-link parameters."""

    n_antennas: int = 6
    carrier_hz: float = 2e9
    rician_k: float = 5.0
    bandwidth_hz: float = 10e6
    noise_figure_db: float = 7.0
    sigma2_rf: float | None = None

    def noise_power(self) -> float:
        """AWGN power: thermal noise over the RF bandwidth plus noise figure."""
        if self.sigma2_rf is not None:
            return self.sigma2_rf
        boltzmann, temp_k = 1.380649e-23, 290.0
        return boltzmann * temp_k * self.bandwidth_hz * 10.0 ** (self.noise_figure_db / 10.0)


@dataclass
class RfChannelState:
    """Per-user access channel to the serving HAP for one slot.

    h: (U, M) complex channel vectors; path_loss: (U,) free-space gains.
    """

    h: np.ndarray
    path_loss: np.ndarray


def free_space_path_loss(dist_m, carrier_hz: float):
    """(c / (4 pi f d))^2 power gain."""
    dist_m = np.asarray(dist_m, dtype=float)
    wavelength = SPEED_OF_LIGHT / carrier_hz
    out = (wavelength / (4.0 * np.pi * dist_m)) ** 2
    return float(out) if out.ndim == 0 else out


def sample_rf(topology, params: RfParams, rng: np.random.Generator) -> RfChannelState:
    """Draw Rician access channels from each user's serving HAP.

    h = sqrt(path_loss) * (sqrt(k/(k+1)) * steering + sqrt(1/(k+1)) * CN(0, I)),
    with a half-wavelength ULA steering vector from the user's azimuth.
    """
    U, M = topology.n_users, params.n_antennas
    h = np.zeros((U, M), dtype=complex)
    path_loss = np.zeros(U)
    k = params.rician_k
    los_w = np.sqrt(k / (k + 1.0))
    nlos_w = np.sqrt(1.0 / (k + 1.0))
    for u in range(U):
        hap = topology.user_hap[u]
        delta = topology.user_pos[u] - topology.hap_pos[hap]
        dist = float(np.linalg.norm(delta))
        path_loss[u] = free_space_path_loss(dist, params.carrier_hz)
        azimuth = np.arctan2(delta[1], delta[0])
        steering = np.exp(-1j * np.pi * np.arange(M) * np.sin(azimuth))
        scatter = (rng.normal(size=M) + 1j * rng.normal(size=M)) / np.sqrt(2.0)
        h[u] = np.sqrt(path_loss[u]) * (los_w * steering + nlos_w * scatter)
    return RfChannelState(h=h, path_loss=path_loss)
