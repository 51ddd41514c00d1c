"""Counter-based random numbers.

Every draw is a pure function of ``(seed, stream, counter)``, so streams for
different latents never interact and whole batches of seeds can be generated
in one vectorised call.  The mixing function is the SplitMix64 finaliser
applied in a short cascade over the three key words.
"""
import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# stream purposes, packed into the upper 32 bits of the stream word
PROPOSAL = 1
RESAMPLE = 2
DATA = 3
NETWORK = 4
ANCESTOR = 5


def stream_id(purpose, index=0):
    return (int(purpose) << 32) | (int(index) & 0xFFFFFFFF)


def _as_u64(x):
    x = np.asarray(x)
    if x.dtype == np.uint64:
        return x
    if x.dtype.kind in "iu":
        return x.astype(np.int64).view(np.uint64) if x.dtype.kind == "i" else x.astype(np.uint64)
    if x.dtype == object or x.ndim == 0:
        return np.asarray(np.vectorize(lambda v: int(v) & _MASK, otypes=[np.uint64])(x))
    raise TypeError(f"integer key expected, got dtype {x.dtype}")


def _mix(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def random_bits(seed, stream, counter):
    """64 random bits per broadcast element of ``(seed, stream, counter)``."""
    seed, stream, counter = np.broadcast_arrays(_as_u64(seed), _as_u64(stream), _as_u64(counter))
    with np.errstate(over="ignore"):
        h = _mix(counter + _GOLDEN)
        h = _mix(h ^ (stream * _GOLDEN))
        h = _mix(h ^ (seed + _M1))
        return _mix(h + _GOLDEN)


def uniform(seed, stream, counter):
    """Doubles in the open interval (0, 1)."""
    bits = random_bits(seed, stream, counter) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0 ** -53


def normal(seed, stream, counter):
    """Standard normal draws (Box-Muller over counters 2c and 2c+1)."""
    counter = _as_u64(counter)
    with np.errstate(over="ignore"):
        c0 = counter * np.uint64(2)
        c1 = c0 + np.uint64(1)
    u1 = uniform(seed, stream, c0)
    u2 = uniform(seed, stream, c1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def seed_array(seeds):
    """Normalise an int or sequence of ints (any sign, 64-bit) to a uint64 vector."""
    if np.isscalar(seeds):
        seeds = [seeds]
    return np.array([int(s) & _MASK for s in seeds], dtype=np.uint64)
