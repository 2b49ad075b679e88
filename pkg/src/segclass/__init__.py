"""segclass: classifiers built on segmentation-network features, at desk scale.

The package trains a small segmentation network on synthetic phantoms,
freezes it, and reuses its multi-scale feature stack as the input of a
light classifier head; a VGG-style net trained from scratch is the
baseline. Everything runs on the CPU on top of a small reverse-mode
autodiff engine whose convolution/pooling kernels are numba-compiled with
a pure-numpy fallback (``SEGCLASS_BACKEND=numpy``).

Layers of the onion, bottom up:

* ``kernels`` / ``kernels_numba`` / ``kernels_numpy``: the hot loops;
* ``tensor`` / ``ops`` / ``initializers`` / ``optim``: the autodiff engine;
* ``nets`` / ``checkpoint``: the three architectures and their file format;
* ``metrics``: losses, label weights, and evaluation metrics;
* ``phantoms`` / ``preprocess`` / ``augment`` / ``dataset``: data generation;
* ``trainer``: fitting and evaluation loops;
* ``frameworks`` / ``sweep`` / ``expconfig`` / ``cli``: experiment harness.
"""

from .errors import ConfigError, DataError, NumericError, SegclassError, ShapeError
from .kernels import BACKEND
from .tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DataError",
    "NumericError",
    "SegclassError",
    "ShapeError",
    "Tensor",
    "no_grad",
    "__version__",
]
