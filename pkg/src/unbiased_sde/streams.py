"""Counter-based Gaussian streams.

A stream is a pure function of ``(master_seed, substream_id, draw index)``:
the j-th 64-bit word is the SplitMix64 output at state ``key + (j+1)*GOLDEN``
where ``key`` hashes the seed pair.  Nothing is carried between draws except
the counter, so any replication can be regenerated in isolation and batches
can be evaluated in any order.

Gaussians are produced by inverse transform (Wichura's AS241) from one word,
so each Gaussian costs exactly one counter step.  Uniforms come from a
separate word sequence and are not charged to the Gaussian counter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, uint64

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SUBSTREAM_SALT = np.uint64(0xD1B54A32D192ED03)
_UNIFORM_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV_2_53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


@njit(uint64(uint64), cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def stream_key(master_seed, substream_id):
    k = mix64(uint64(master_seed) + GOLDEN)
    return mix64(k ^ mix64(uint64(substream_id) + _SUBSTREAM_SALT))


@njit(cache=True, nogil=True)
def uniform_key(key):
    return mix64(key ^ _UNIFORM_SALT)


@njit(cache=True, nogil=True)
def word(key, index):
    return mix64(key + (uint64(index) + _ONE) * GOLDEN)


@njit(cache=True, nogil=True)
def word_to_unit(w):
    # 53 bits, centred in their cell: strictly inside (0, 1)
    return (float(w >> _S11) + 0.5) * _INV_2_53


@njit(cache=True, nogil=True)
def normal_ppf(p):
    """Inverse standard normal CDF, Wichura (1988) AS241, ~1e-16 relative."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit(cache=True, nogil=True)
def gaussian_at(key, index):
    return normal_ppf(word_to_unit(word(key, index)))


@njit(cache=True, nogil=True)
def uniform_at(key, index):
    return word_to_unit(word(uniform_key(key), index))


@njit(cache=True, nogil=True)
def _fill_gaussians(key, start, out):
    for i in range(out.shape[0]):
        out[i] = gaussian_at(key, start + i)


@dataclass
class RandomStream:
    """Single-owner Gaussian stream; ``draws`` counts Gaussians handed out."""

    master_seed: int
    substream_id: int
    key: np.uint64 = field(init=False, repr=False)
    draws: int = 0
    uniforms: int = 0

    def __post_init__(self):
        self.master_seed = int(self.master_seed) & MASK64
        self.substream_id = int(self.substream_id) & MASK64
        self.key = np.uint64(stream_key(np.uint64(self.master_seed), np.uint64(self.substream_id)))

    def next_gaussian(self) -> float:
        z = gaussian_at(self.key, self.draws)
        self.draws += 1
        return z

    def gaussians(self, n: int) -> np.ndarray:
        out = np.empty(n)
        _fill_gaussians(self.key, self.draws, out)
        self.draws += n
        return out

    def next_uniform(self) -> float:
        u = uniform_at(self.key, self.uniforms)
        self.uniforms += 1
        return u


def derive_substream(master_seed: int, substream_id: int) -> RandomStream:
    return RandomStream(master_seed, substream_id)


def next_gaussian(stream: RandomStream) -> float:
    return stream.next_gaussian()


def derive_seed(master_seed: int, *labels: int) -> int:
    """Hash ``master_seed`` with integer labels into a fresh 64-bit seed."""
    k = np.uint64(int(master_seed) & MASK64)
    for label in labels:
        k = mix64(np.uint64((int(k) ^ int(mix64(np.uint64(int(label) & MASK64)))) & MASK64))
    return int(k)
