from typing import (Tuple, Any, Optional, Callable, Union, List, Sequence, Dict, Iterable, Iterator, Mapping,
                    Hashable)
from pathlib import Path
import numpy as np
import numpy.typing as npt

Index3 = Tuple[int, int, int]
Vector3 = Tuple[float, float, float]
BoolArray = npt.NDArray[np.bool_]
PathLike = Union[str, Path]
