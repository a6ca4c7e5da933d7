"""Scenario definition, path loss, and random channel drops.

A Scenario holds every static network parameter: array sizes, QoS targets,
power constants, and node geometry. A channel drop is one realization of
i.i.d. CSCG small-scale fading on each link, scaled by the square root of
that link's linear path-loss gain; the reflected path is BS -> IRS -> user
with the IRS position as the relay point.

Path loss is 35.3 + 37.6 log10(d) dB with d in meters for every link.
With that intercept the reflected path only competes with the direct one
when the users sit very close to the IRS, so the default geometry places
the serving cluster right next to the surface and far from the BS (a weak
direct link), which is the regime where reconfiguring the surface pays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

# Noise floor: -174 dBm/Hz thermal density over 1 MHz.
DEFAULT_SIGMA2_W = 10.0 ** ((-174.0 + 10.0 * math.log10(1e6) - 30.0) / 10.0)


def path_loss_db(d: float) -> float:
    """Attenuation in dB at distance d meters: 35.3 + 37.6 log10(d)."""
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    return 35.3 + 37.6 * math.log10(d)


def path_gain(d: float) -> float:
    """Linear power gain 10^(-PL/10)."""
    return 10.0 ** (-path_loss_db(d) / 10.0)


def _per_user(value, k: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (k,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class Scenario:
    """Static network description. T_k uses 1-based slot indices: user k may
    only be served in slots l < T_k, and T_k = L+1 disables the deadline."""

    M: int                      # BS antennas
    N: int                      # IRS elements
    K: int                      # users
    L: int                      # time slots
    m_d: int                    # blocklength in symbols
    T_k: np.ndarray             # (K,) deadline slot index in 1..L+1
    eps_k: np.ndarray           # (K,) decoding error probability
    R_min_k: np.ndarray         # (K,) minimum rate [bits/s/Hz]
    p_max: float                # BS power budget [W]
    sigma2_k: np.ndarray        # (K,) noise power [W]
    P_IRS: float                # IRS static power [W]
    P_d: float                  # dynamic power per IRS element [W]
    P_c_BS: float               # BS circuit power [W]
    bs_pos: np.ndarray          # (2,) [m]
    irs_pos: np.ndarray         # (2,) [m]
    user_pos: np.ndarray        # (K, 2) [m]
    seed: int = 0
    user_ring: tuple | None = None   # optional (r_min, r_max) around the IRS

    def __post_init__(self):
        if min(self.M, self.K, self.L) < 1 or self.N < 0:
            raise ValueError("M, K, L must be >= 1 and N >= 0")
        if self.m_d < 1:
            raise ValueError("blocklength m_d must be >= 1")
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")
        for name in ("P_IRS", "P_d", "P_c_BS"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if np.any(self.sigma2_k <= 0):
            raise ValueError("noise powers must be positive")
        if np.any((self.eps_k <= 0) | (self.eps_k >= 1)):
            raise ValueError("eps_k must lie in (0, 1)")
        if np.any((self.T_k < 1) | (self.T_k > self.L + 1)):
            raise ValueError("T_k must lie in 1..L+1")
        if self.user_pos.shape != (self.K, 2):
            raise ValueError("user_pos must have shape (K, 2)")

    @property
    def active_slots(self) -> np.ndarray:
        """(K, L) boolean mask: slot l (0-based) usable for user k."""
        l_idx = np.arange(1, self.L + 1)
        return l_idx[None, :] < self.T_k[:, None]

    def static_power(self, include_irs: bool = True) -> float:
        p = self.P_c_BS
        if include_irs:
            p += self.P_IRS + self.N * self.P_d
        return p


@dataclass(frozen=True)
class ChannelSet:
    """One fading drop: H (N, M) BS->IRS, h_irs (K, N) IRS->user,
    h_bs (K, M) BS->user."""

    H: np.ndarray
    h_irs: np.ndarray
    h_bs: np.ndarray

    def __post_init__(self):
        for name in ("H", "h_irs", "h_bs"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    def validate_against(self, s: Scenario) -> None:
        if self.H.shape != (s.N, s.M) or self.h_irs.shape != (s.K, s.N) \
                or self.h_bs.shape != (s.K, s.M):
            raise ValueError("channel dimensions do not match scenario")


def make_scenario(
    M=5, N=20, K=4, L=2, m_d=250, T_k=None, eps_k=1e-7, R_min_k=1.6,
    p_max=1.0, sigma2_k=DEFAULT_SIGMA2_W, P_IRS=0.1, P_d=0.005, P_c_BS=0.5,
    bs_pos=(0.0, 0.0), irs_pos=(400.0, 0.0), user_pos=None,
    user_ring=(0.2, 0.35), seed=0,
) -> Scenario:
    """Scenario with the default parameter set; user positions are drawn
    around the IRS from `user_ring` unless given explicitly."""
    T_k = L + 1 if T_k is None else T_k
    s = Scenario(
        M=int(M), N=int(N), K=int(K), L=int(L), m_d=int(m_d),
        T_k=_per_user(T_k, int(K), "T_k").astype(int),
        eps_k=_per_user(eps_k, int(K), "eps_k"),
        R_min_k=_per_user(R_min_k, int(K), "R_min_k"),
        p_max=float(p_max),
        sigma2_k=_per_user(sigma2_k, int(K), "sigma2_k"),
        P_IRS=float(P_IRS), P_d=float(P_d), P_c_BS=float(P_c_BS),
        bs_pos=np.asarray(bs_pos, dtype=float),
        irs_pos=np.asarray(irs_pos, dtype=float),
        user_pos=np.zeros((int(K), 2)) if user_pos is None
        else np.asarray(user_pos, dtype=float),
        seed=int(seed),
        user_ring=None if user_ring is None else (float(user_ring[0]), float(user_ring[1])),
    )
    if user_pos is None:
        if user_ring is None:
            raise ValueError("need explicit user_pos or a user_ring")
        s = replace(s, user_pos=_draw_ring_positions(s))
    return s


def _draw_ring_positions(s: Scenario) -> np.ndarray:
    """Uniform-in-annulus user placement around the IRS, seeded separately
    from the fading so positions and fading decouple."""
    r_min, r_max = s.user_ring
    rng = np.random.default_rng([s.seed, 0x9E3779B9])
    radii = np.sqrt(rng.uniform(r_min**2, r_max**2, size=s.K))
    angles = rng.uniform(0.0, 2.0 * math.pi, size=s.K)
    offsets = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    return s.irs_pos[None, :] + offsets


def scenario_for_drop(s: Scenario, drop_seed: int) -> Scenario:
    """Re-seed a scenario for one Monte-Carlo drop. Scenarios carrying a
    user_ring also re-draw the user positions under the new seed."""
    out = replace(s, seed=int(drop_seed))
    if s.user_ring is not None:
        out = replace(out, user_pos=_draw_ring_positions(out))
    return out


def generate_channels(s: Scenario) -> ChannelSet:
    """Draw one CSCG fading realization for every link (deterministic in
    s.seed). Variance of each entry equals the link's linear path gain."""
    rng = np.random.default_rng([s.seed, 0x51ED270B])

    def cscg(shape, gain):
        g = np.sqrt(np.asarray(gain, dtype=float) / 2.0)
        re = rng.standard_normal(shape)
        im = rng.standard_normal(shape)
        return g * (re + 1j * im)

    d_bi = float(np.linalg.norm(s.irs_pos - s.bs_pos))
    d_iu = np.linalg.norm(s.user_pos - s.irs_pos[None, :], axis=1)
    d_bu = np.linalg.norm(s.user_pos - s.bs_pos[None, :], axis=1)

    if s.N > 0:
        H = cscg((s.N, s.M), path_gain(d_bi))
        h_irs = np.stack([cscg((s.N,), path_gain(d)) for d in d_iu])
    else:
        H = np.zeros((0, s.M), dtype=complex)
        h_irs = np.zeros((s.K, 0), dtype=complex)
    h_bs = np.stack([cscg((s.M,), path_gain(d)) for d in d_bu])
    ch = ChannelSet(H=H, h_irs=h_irs, h_bs=h_bs)
    ch.validate_against(s)
    return ch


def combined_channel(ch: ChannelSet, psi: np.ndarray) -> np.ndarray:
    """Effective BS->user channels under reflection coefficients psi.

    psi is the length-N diagonal of the reflection matrix (|psi_n| <= 1).
    Returns (K, M) rows h_k with h_k^H = h_irs_k^H diag(psi) H + h_bs_k^H.
    """
    psi = np.asarray(psi, dtype=complex)
    n = ch.H.shape[0]
    if psi.shape != (n,):
        raise ValueError(f"psi must have shape ({n},), got {psi.shape}")
    if n and np.abs(psi).max() > 1.0 + 1e-9:
        raise ValueError("reflection coefficients must have modulus <= 1")
    if n == 0:
        return ch.h_bs.copy()
    rows = (ch.h_irs.conj() * psi[None, :]) @ ch.H + ch.h_bs.conj()
    return rows.conj()


def load_scenario(path: str, seed: int | None = None) -> Scenario:
    """Build a Scenario from a YAML config file.

    Top level: M, N, K, L, m_d, seed; nested sections `qos`
    (T_k, eps_k, R_min_k), `powers` (p_max, P_IRS, P_d, P_c_BS and either
    sigma2_k or noise_dbm_hz + bandwidth_hz), and `geometry` (bs, irs, and
    either users or user_ring {r_min, r_max}).
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config root must be a mapping: {path}")
    qos = raw.get("qos", {})
    powers = raw.get("powers", {})
    geom = raw.get("geometry", {})

    kwargs = {}
    for key in ("M", "N", "K", "L", "m_d", "seed"):
        if key in raw:
            kwargs[key] = raw[key]
    for key in ("T_k", "eps_k", "R_min_k"):
        if key in qos:
            kwargs[key] = qos[key]
    for key in ("p_max", "P_IRS", "P_d", "P_c_BS", "sigma2_k"):
        if key in powers:
            kwargs[key] = powers[key]
    if "noise_dbm_hz" in powers:
        bw = float(powers.get("bandwidth_hz", 1e6))
        kwargs["sigma2_k"] = 10.0 ** (
            (float(powers["noise_dbm_hz"]) + 10.0 * math.log10(bw) - 30.0) / 10.0)
    if "bs" in geom:
        kwargs["bs_pos"] = geom["bs"]
    if "irs" in geom:
        kwargs["irs_pos"] = geom["irs"]
    if "users" in geom:
        kwargs["user_pos"] = geom["users"]
        kwargs["user_ring"] = None
    elif "user_ring" in geom:
        ring = geom["user_ring"]
        kwargs["user_ring"] = (ring["r_min"], ring["r_max"])
    if seed is not None:
        kwargs["seed"] = int(seed)
    return make_scenario(**kwargs)
