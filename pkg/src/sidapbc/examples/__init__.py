"""Worked examples: the cart-pendulum and the ball-and-beam."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def _load(system: str) -> str:
    return resources.files(__name__).joinpath("data", f"{system}.json").read_text()


def load_defaults(system: str) -> dict:
    """Shipped parameter document for ``system`` (a fresh copy each call)."""
    try:
        return json.loads(_load(system))
    except FileNotFoundError:
        raise KeyError(f"no shipped defaults for system {system!r}") from None


SYSTEMS = ("cart_pendulum", "ball_beam")
