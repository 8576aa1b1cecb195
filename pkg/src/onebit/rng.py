"""Counter-based random streams keyed by ``(seed, tag, ...)``.

Every random quantity in the package is drawn from its own Philox stream.
The key is hashed through :class:`numpy.random.SeedSequence`, so streams for
different tags are statistically independent and no draw depends on the
order in which other streams were consumed.
"""
import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_word(tag):
    if isinstance(tag, (bool, np.bool_)):
        raise TypeError("boolean stream tags are ambiguous")
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    if isinstance(tag, str):
        digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"unsupported stream tag {tag!r}")


def _seed_sequence(seed, tags):
    key = tuple(_tag_word(t) for t in tags)
    return np.random.SeedSequence(int(seed) & _MASK64, spawn_key=key)


def stream(seed, *tags):
    """Return a Philox-backed generator for the stream ``(seed, *tags)``.

    Tags may be non-negative integers or strings. Identical keys give
    bitwise-identical draws on every platform.
    """
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, tags)))


def derive_seed(seed, *tags):
    """Hash ``(seed, *tags)`` into a fresh 64-bit seed."""
    state = _seed_sequence(seed, tags).generate_state(1, dtype=np.uint64)
    return int(state[0])
