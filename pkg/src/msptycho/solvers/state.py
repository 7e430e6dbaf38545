from dataclasses import dataclass, field

import numpy as np


@dataclass
class ReconstructionState:
    """Current slice estimates (diagonals of ``O_m``) and solver bookkeeping.

    ``fidelity_scale`` is the data-fidelity scalar of the sparse
    decomposition; it is unrelated to the electron wavelength.
    """

    slices: list
    fidelity_scale: float = 1.0
    a_estimate: np.ndarray = None
    history: list = field(default_factory=list)
    n_iter: int = 0

    def __post_init__(self):
        self.slices = [np.array(s, dtype=complex).reshape(-1) for s in self.slices]

    @classmethod
    def vacuum(cls, n, m):
        return cls([np.ones(n * n, dtype=complex) for _ in range(m)])

    @property
    def n(self):
        return int(round(np.sqrt(self.slices[0].size)))

    def copy(self):
        return ReconstructionState([s.copy() for s in self.slices], self.fidelity_scale,
                                   None if self.a_estimate is None else self.a_estimate.copy(),
                                   list(self.history), self.n_iter)

    def grids(self):
        n = self.n
        return [s.reshape(n, n) for s in self.slices]
