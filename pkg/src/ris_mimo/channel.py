"""Channel generation for the BS / RIS / users geometry.

Every link follows a Rician model with a rank-1 steering-vector LoS part
and unit-variance circularly-symmetric Gaussian NLoS part, scaled by the
amplitude of a log-distance path-loss law.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.txt"
PAYLOAD_NAME = "payload.bin"

# link ids for substream derivation
LINK_DIRECT, LINK_BS_RIS, LINK_RIS_USER = 0, 1, 2
POSITIONS_STREAM = 7

# (arrival, departure) angles per link
ANGLES = {
    LINK_DIRECT: (0.0, 0.0),
    LINK_BS_RIS: (np.pi / 2, 0.0),
    LINK_RIS_USER: (0.0, np.pi / 2),
}


@dataclass(frozen=True)
class SystemConfig:
    L: int = 16
    K: int = 4
    N: int = 8
    N_S: int = 4
    tx_power_dbm: float = 20.0
    noise_power_dbm: float = -90.0
    bs_pos: tuple[float, float, float] = (0.0, 0.0, 10.0)
    ris_pos: tuple[float, float, float] = (50.0, 50.0, 15.0)
    # ((xmin, xmax), (ymin, ymax), (zmin, zmax))
    user_region: tuple[tuple[float, float], ...] = ((200.0, 300.0), (-50.0, 50.0), (0.0, 0.0))
    pathloss_exponents: tuple[float, float, float] = (3.5, 2.2, 2.8)
    rician_factors: tuple[float, float, float] = (20.0, 10.0, 10.0)
    ref_loss_db: float = -30.0
    ref_dist_m: float = 1.0
    spacing_phase: float = np.pi
    master_seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.N < 0:
            raise ValueError("N must be nonnegative")
        if not 1 <= self.N_S <= self.L:
            raise ValueError(f"need 1 <= N_S <= L, got N_S={self.N_S}, L={self.L}")
        if any(k < 0 for k in self.rician_factors):
            raise ValueError("Rician factors must be nonnegative")
        if any(a <= 0 for a in self.pathloss_exponents):
            raise ValueError("path-loss exponents must be positive")
        if len(self.user_region) != 3 or any(lo > hi for lo, hi in self.user_region):
            raise ValueError("user_region must be three (lo, hi) pairs")
        # normalize sequences so equality and hashing work after YAML/JSON loads
        object.__setattr__(self, "bs_pos", tuple(float(v) for v in self.bs_pos))
        object.__setattr__(self, "ris_pos", tuple(float(v) for v in self.ris_pos))
        object.__setattr__(
            self, "user_region", tuple((float(lo), float(hi)) for lo, hi in self.user_region)
        )
        object.__setattr__(
            self, "pathloss_exponents", tuple(float(v) for v in self.pathloss_exponents)
        )
        object.__setattr__(self, "rician_factors", tuple(float(v) for v in self.rician_factors))

    @property
    def snr(self) -> float:
        return 10.0 ** ((self.tx_power_dbm - self.noise_power_dbm) / 10.0)

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown SystemConfig keys: {sorted(unknown)}")
        return cls(**data)


PROFILES = {
    "desk": SystemConfig(),
    "paper": SystemConfig(L=128, K=8, N=50, N_S=10),
}


@dataclass(frozen=True)
class ChannelTriple:
    """Direct (K x L), BS->RIS (N x L) and RIS->users (K x N) gains."""

    direct: np.ndarray
    bs_ris: np.ndarray
    ris_user: np.ndarray

    def __post_init__(self):
        K, L = self.direct.shape
        N = self.bs_ris.shape[0]
        if self.bs_ris.shape != (N, L) or self.ris_user.shape != (K, N):
            raise ValueError(
                "inconsistent channel shapes: "
                f"direct {self.direct.shape}, bs_ris {self.bs_ris.shape}, "
                f"ris_user {self.ris_user.shape}"
            )

    @property
    def K(self) -> int:
        return self.direct.shape[0]

    @property
    def L(self) -> int:
        return self.direct.shape[1]

    @property
    def N(self) -> int:
        return self.bs_ris.shape[0]

    def truncate_ris(self, n: int) -> "ChannelTriple":
        """Keep the first ``n`` RIS elements."""
        return ChannelTriple(self.direct, self.bs_ris[:n], self.ris_user[:, :n])

    def equals(self, other: "ChannelTriple") -> bool:
        return (
            np.array_equal(self.direct, other.direct)
            and np.array_equal(self.bs_ris, other.bs_ris)
            and np.array_equal(self.ris_user, other.ris_user)
        )


@dataclass(frozen=True)
class ChannelEnsemble:
    samples: list[ChannelTriple]
    seed: int
    config_digest: str
    user_positions: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.samples:
            raise ValueError("an ensemble needs at least one sample")
        shape = _dims(self.samples[0])
        for t in self.samples[1:]:
            if _dims(t) != shape:
                raise ValueError("ensemble samples have mismatched dimensions")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def s(self) -> int:
        return len(self.samples)

    def equals(self, other: "ChannelEnsemble") -> bool:
        return (
            self.seed == other.seed
            and self.config_digest == other.config_digest
            and len(self) == len(other)
            and all(a.equals(b) for a, b in zip(self.samples, other.samples))
        )


def _dims(t: ChannelTriple) -> tuple[int, int, int]:
    return t.K, t.L, t.N


def path_loss_linear(d: float, T0_db: float, d0: float, alpha: float) -> float:
    """Amplitude gain sqrt(T0 * (d/d0)^-alpha), with T0 given in dB."""
    if d <= 0:
        raise ValueError(f"link distance must be positive, got {d}")
    power = 10.0 ** (T0_db / 10.0) * (d / d0) ** (-alpha)
    return float(np.sqrt(power))


def steering_vector(n_elems: int, angle: float, spacing_phase: float = np.pi) -> np.ndarray:
    if n_elems < 0:
        raise ValueError("n_elems must be nonnegative")
    phase = spacing_phase * np.sin(angle) * np.arange(n_elems)
    return np.exp(1j * phase)


def _substream(seed: int, sample: int, link: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, sample, link]))


def _cn(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    # drawn as (rows, cols, 2) so the first rows are stable when rows grows
    z = rng.standard_normal((rows, cols, 2))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def _rician(nlos: np.ndarray, los: np.ndarray, kappa: float) -> np.ndarray:
    if np.isinf(kappa):
        return los
    return np.sqrt(1.0 / (kappa + 1.0)) * nlos + np.sqrt(kappa / (kappa + 1.0)) * los


def los_component(rows: int, cols: int, link: int, spacing_phase: float) -> np.ndarray:
    aoa, aod = ANGLES[link]
    a_r = steering_vector(rows, aoa, spacing_phase)
    a_t = steering_vector(cols, aod, spacing_phase)
    return np.outer(a_r, a_t.conj())


def draw_user_positions(config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    lo = np.array([b[0] for b in config.user_region])
    hi = np.array([b[1] for b in config.user_region])
    return lo + (hi - lo) * rng.random((config.K, 3))


def user_positions_for_seed(config: SystemConfig, seed: int) -> np.ndarray:
    return draw_user_positions(config, _substream(seed, 0, POSITIONS_STREAM))


def sample_triple(
    config: SystemConfig,
    user_positions: np.ndarray,
    rng_stream: np.random.Generator | tuple[int, int],
) -> ChannelTriple:
    """Draw one channel realization for fixed user positions.

    ``rng_stream`` is either a Generator (links drawn sequentially from it)
    or a ``(seed, sample_index)`` key, in which case each link gets its own
    substream derived from ``(seed, sample_index, link_id)``.  Keyed draws
    are nested in N: the first n RIS elements do not depend on N.
    """
    K, L, N = config.K, config.L, config.N
    pos = np.asarray(user_positions, dtype=float).reshape(K, 3)
    if not np.all(np.isfinite(pos)):
        raise ValueError("user positions must be finite")
    bs, ris = np.asarray(config.bs_pos), np.asarray(config.ris_pos)
    a_bu, a_br, a_ru = config.pathloss_exponents
    k_bu, k_br, k_ru = config.rician_factors
    T0, d0, sp = config.ref_loss_db, config.ref_dist_m, config.spacing_phase

    if isinstance(rng_stream, np.random.Generator):
        rngs = [rng_stream] * 3
    else:
        seed, index = rng_stream
        rngs = [_substream(seed, index, link) for link in (LINK_DIRECT, LINK_BS_RIS, LINK_RIS_USER)]

    d_bu = np.linalg.norm(pos - bs, axis=1)
    d_ru = np.linalg.norm(pos - ris, axis=1)
    d_br = float(np.linalg.norm(ris - bs))
    amp_bu = np.array([path_loss_linear(d, T0, d0, a_bu) for d in d_bu])
    amp_ru = np.array([path_loss_linear(d, T0, d0, a_ru) for d in d_ru])

    direct = _rician(_cn(rngs[0], K, L), los_component(K, L, LINK_DIRECT, sp), k_bu)
    direct = amp_bu[:, None] * direct

    if N > 0:
        amp_br = path_loss_linear(d_br, T0, d0, a_br)
        bs_ris = amp_br * _rician(_cn(rngs[1], N, L), los_component(N, L, LINK_BS_RIS, sp), k_br)
        # drawn element-major so truncating N keeps the leading columns
        nlos_ru = _cn(rngs[2], N, K).T
        ris_user = amp_ru[:, None] * _rician(nlos_ru, los_component(K, N, LINK_RIS_USER, sp), k_ru)
    else:
        bs_ris = np.zeros((0, L), dtype=complex)
        ris_user = np.zeros((K, 0), dtype=complex)
    return ChannelTriple(direct, bs_ris, ris_user)


def sample_ensemble(
    config: SystemConfig,
    s: int,
    seed: int,
    user_positions: np.ndarray | None = None,
) -> ChannelEnsemble:
    """``s`` i.i.d. fading draws at user positions fixed for the whole ensemble."""
    if s < 1:
        raise ValueError("s must be at least 1")
    if user_positions is None:
        user_positions = user_positions_for_seed(config, seed)
    samples = [sample_triple(config, user_positions, (seed, i)) for i in range(s)]
    return ChannelEnsemble(samples, int(seed), config.digest(), np.asarray(user_positions))


# --- persistence -----------------------------------------------------------


class EnsembleFormatError(ValueError):
    pass


class ManifestError(EnsembleFormatError):
    pass


class DimensionError(EnsembleFormatError):
    pass


class ChecksumError(EnsembleFormatError):
    pass


_MANIFEST_KEYS = ("format_version", "s", "K", "L", "N", "seed", "config_digest", "payload_checksum")


def _payload_bytes(e: ChannelEnsemble) -> bytes:
    parts = []
    for t in e.samples:
        for m in (t.direct, t.bs_ris, t.ris_user):
            parts.append(np.ascontiguousarray(m, dtype="<c16").view("<f8").ravel())
    return np.concatenate(parts).astype("<f8").tobytes()


def save_ensemble(e: ChannelEnsemble, path: str | Path) -> Path:
    """Write ``manifest.txt`` and ``payload.bin`` into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    payload = _payload_bytes(e)
    K, L, N = _dims(e.samples[0])
    manifest = {
        "format_version": FORMAT_VERSION,
        "s": e.s,
        "K": K,
        "L": L,
        "N": N,
        "seed": e.seed,
        "config_digest": e.config_digest,
        "payload_checksum": "sha256:" + hashlib.sha256(payload).hexdigest(),
    }
    (path / PAYLOAD_NAME).write_bytes(payload)
    text = "".join(f"{k} = {manifest[k]}\n" for k in _MANIFEST_KEYS)
    (path / MANIFEST_NAME).write_text(text, encoding="utf-8")
    return path


def _read_manifest(path: Path) -> dict[str, str]:
    try:
        text = (path / MANIFEST_NAME).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "=" not in line:
            raise ManifestError(f"manifest line {lineno} is not key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    missing = [k for k in _MANIFEST_KEYS if k not in out]
    if missing:
        raise ManifestError(f"manifest missing keys: {missing}")
    return out


def load_ensemble(path: str | Path) -> ChannelEnsemble:
    path = Path(path)
    m = _read_manifest(path)
    try:
        version = int(m["format_version"])
        s, K, L, N, seed = (int(m[k]) for k in ("s", "K", "L", "N", "seed"))
    except ValueError as exc:
        raise ManifestError(f"malformed manifest value: {exc}") from exc
    if version != FORMAT_VERSION:
        raise ManifestError(f"unsupported format_version {version}")
    if min(s, K, L) < 1 or N < 0:
        raise ManifestError("manifest dimensions must be positive")

    payload = (path / PAYLOAD_NAME).read_bytes()
    algo, _, digest = m["payload_checksum"].partition(":")
    if algo != "sha256" or not digest:
        raise ManifestError("payload_checksum must be sha256:<hex>")
    if hashlib.sha256(payload).hexdigest() != digest:
        raise ChecksumError("payload checksum mismatch")

    per_sample = K * L + N * L + K * N
    if len(payload) != s * per_sample * 16:
        raise DimensionError(
            f"payload holds {len(payload)} bytes, manifest implies {s * per_sample * 16}"
        )
    flat = np.frombuffer(payload, dtype="<f8").view("<c16")
    samples = []
    for i in range(s):
        chunk = flat[i * per_sample : (i + 1) * per_sample]
        direct = chunk[: K * L].reshape(K, L).astype(complex)
        bs_ris = chunk[K * L : K * L + N * L].reshape(N, L).astype(complex)
        ris_user = chunk[K * L + N * L :].reshape(K, N).astype(complex)
        samples.append(ChannelTriple(direct, bs_ris, ris_user))
    return ChannelEnsemble(samples, seed, m["config_digest"])


def ensemble_from_triples(triples: Sequence[ChannelTriple], seed: int = 0) -> ChannelEnsemble:
    """Wrap externally built triples (e.g. test fixtures) as an ensemble."""
    return ChannelEnsemble(list(triples), seed, "external")
