"""Deterministic random streams.

A seed is a plain integer. Derived streams are obtained with
``stream(seed, *branch)``: the branch labels go into the ``spawn_key`` of a
:class:`numpy.random.SeedSequence`, which is numpy's stable splitting rule, so
the same ``(seed, branch)`` always yields the same generator regardless of how
many other streams were created before it. String labels are allowed and are
mapped to integers with crc32 so module-level stream names stay readable.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream"]


def _branch_key(branch) -> tuple[int, ...]:
    key = []
    for part in branch:
        if isinstance(part, str):
            key.append(zlib.crc32(part.encode("utf-8")))
        else:
            key.append(int(part))
    return tuple(key)


def stream(seed, *branch) -> np.random.Generator:
    """Return the generator for ``(seed, branch)``.

    Passing a Generator through is supported so that functions taking a seed
    can also accept an already-derived stream.
    """
    if isinstance(seed, np.random.Generator):
        if branch:
            raise ValueError("cannot branch an already-derived generator")
        return seed
    ss = np.random.SeedSequence(int(seed), spawn_key=_branch_key(branch))
    return np.random.Generator(np.random.PCG64(ss))
