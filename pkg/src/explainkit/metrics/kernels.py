"""Kernel selection: compiled extension if it built, pure Python otherwise.

Set ``EXPLAINKIT_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and by tests that exercise both paths).
"""

from __future__ import annotations

import os

from . import _pykernels


def _select():
    if os.environ.get("EXPLAINKIT_PURE_PYTHON"):
        return _pykernels
    try:
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    except ImportError:
        return _pykernels


_impl = _select()

IMPLEMENTATION: str = _impl.IMPLEMENTATION
lcs_length = _impl.lcs_length
bleu_segment_stats = _impl.bleu_segment_stats


def available_implementations() -> dict[str, object]:
    """All importable kernel modules, keyed by implementation name."""
    impls: dict[str, object] = {_pykernels.IMPLEMENTATION: _pykernels}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        impls[_kernels.IMPLEMENTATION] = _kernels
    except ImportError:
        pass
    return impls
