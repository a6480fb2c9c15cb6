"""paritybench: decide by simulation whether a continuous weak parity
measurement helps quantum error correction.

Layers: dense operator algebra (qcore), stabilizer codes (codes), dispersive
readout reduction (cqed), Lindblad/stochastic integration (sme, trajfile),
SDP-optimal recovery (recovery), threshold decoding (decoders), the
delayed-tomography fidelity estimator (estimator), and benchmark orchestration
with a CLI (bench, cli).
"""

__version__ = "0.1.0"

from . import codes, cqed, decoders, qcore, recovery, sme, tolerances, trajfile  # noqa: F401,E402
from . import estimator  # noqa: F401,E402

__all__ = ["codes", "cqed", "decoders", "estimator", "qcore", "recovery",
           "sme", "tolerances", "trajfile", "__version__"]
