"""Backend selection for the hot loops.

The compiled extension ``animove._core`` is used when it imports; otherwise,
or when ``ANIMOVE_PURE_PYTHON=1`` is set, the numpy reference kernels in
``animove._pycore`` are used. ``BACKEND`` names the active choice.
"""

import os

from . import _pycore

if os.environ.get("ANIMOVE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pycore
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        _impl = _pycore

BACKEND = "cython" if _impl is not _pycore else "python"

hmm_forward_loglik = _impl.hmm_forward_loglik
hmm_forward = _impl.hmm_forward
hmm_backward = _impl.hmm_backward
hmm_viterbi = _impl.hmm_viterbi
rw_mh_sweep = _impl.rw_mh_sweep
gibbs_state_sweep = _impl.gibbs_state_sweep


def available_backends():
    """Return a dict mapping backend name to kernel module."""
    out = {"python": _pycore}
    try:
        from . import _core
    except ImportError:
        return out
    out["cython"] = _core
    return out
