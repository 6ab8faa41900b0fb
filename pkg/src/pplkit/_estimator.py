"""Minimal scikit-learn-compatible parameter handling.

Estimators in this package follow the sklearn contract: constructor arguments
are stored verbatim on ``self`` under the same names, learned state lives in
trailing-underscore attributes set by ``fit``, and ``get_params``/``set_params``
round-trip the constructor arguments. That is enough for ``sklearn.clone`` and
pipeline composition to work without importing scikit-learn here.
"""

from __future__ import annotations

import inspect
from typing import Any


class ParamsMixin:
    """get_params/set_params backed by the ``__init__`` signature."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep: bool = True) -> dict[str, Any]:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params: Any):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"
