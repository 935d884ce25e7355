"""Conserved-variable fields and the ideal-gas equation of state."""

from dataclasses import dataclass, replace

import numpy as np

from .errors import StateInvalidError


@dataclass(frozen=True)
class GasConstants:
    """Dry-air constants; Gamma = (gamma-1)/gamma is derived, never stored."""

    gamma: float = 1.4
    g: float = 9.81
    R_dry: float = 287.05

    def __post_init__(self):
        if self.gamma <= 1.0:
            raise StateInvalidError("gamma must exceed 1")

    @property
    def Gamma(self) -> float:
        return (self.gamma - 1.0) / self.gamma

    def without_gravity(self) -> "GasConstants":
        return replace(self, g=0.0)


def eos_internal_energy(p, rho, constants: GasConstants = GasConstants()):
    """Specific internal energy e = p / ((gamma - 1) rho) of an ideal gas."""
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(p <= 0) or np.any(rho <= 0):
        raise StateInvalidError("pressure and density must be positive")
    return p / ((constants.gamma - 1.0) * rho)


def pressure_from_energy(rho, momentum, rho_e_total, constants: GasConstants = GasConstants()):
    """p = (gamma - 1)(rhoE - rho |u|^2 / 2) from conserved nodal values."""
    rho = np.asarray(rho, dtype=float)
    kinetic = 0.5 * np.sum(np.asarray(momentum, dtype=float) ** 2, axis=-2) / rho
    return (constants.gamma - 1.0) * (np.asarray(rho_e_total, dtype=float) - kinetic)


@dataclass
class StateField:
    """Cell-major nodal coefficients of the conserved variables plus pressure.

    Shapes: rho, rho_e, p are (ncells, nodes); momentum is (ncells, dim, nodes).
    Nodes are lexicographic with the x direction fastest.  The stored pressure
    is kept consistent with the conserved variables through
    :meth:`refresh_pressure`, so operator loops never re-invert the EOS.
    """

    rho: np.ndarray
    momentum: np.ndarray
    rho_e: np.ndarray
    p: np.ndarray
    constants: GasConstants

    @classmethod
    def from_primitive(cls, rho, velocity, p, constants: GasConstants):
        rho = np.asarray(rho, dtype=float)
        velocity = np.asarray(velocity, dtype=float)
        p = np.asarray(p, dtype=float)
        momentum = rho[:, None, :] * velocity
        kinetic = 0.5 * rho * np.sum(velocity**2, axis=1)
        rho_e = p / (constants.gamma - 1.0) + kinetic
        state = cls(rho=rho, momentum=momentum, rho_e=rho_e, p=p.copy(), constants=constants)
        state.validate()
        return state

    @property
    def ncells(self) -> int:
        return self.rho.shape[0]

    @property
    def dim(self) -> int:
        return self.momentum.shape[1]

    def velocity(self) -> np.ndarray:
        return self.momentum / self.rho[:, None, :]

    def kinetic(self) -> np.ndarray:
        return 0.5 * np.sum(self.momentum**2, axis=1) / self.rho**2

    def enthalpy_weight(self) -> np.ndarray:
        """Nodal rho*h = gamma/(gamma-1) * p for the ideal gas."""
        g = self.constants.gamma
        return self.p * (g / (g - 1.0))

    def refresh_pressure(self):
        self.p = pressure_from_energy(self.rho, self.momentum, self.rho_e, self.constants)

    def validate(self):
        if np.any(self.rho <= 0):
            raise StateInvalidError(f"non-positive density (min {self.rho.min():.3e})")
        if np.any(self.p <= 0):
            raise StateInvalidError(f"non-positive pressure (min {self.p.min():.3e})")
        recon = pressure_from_energy(self.rho, self.momentum, self.rho_e, self.constants)
        err = np.max(np.abs(recon - self.p)) / max(np.max(np.abs(self.p)), 1e-300)
        if err > 1e-10:
            raise StateInvalidError(f"stored pressure inconsistent with EOS (rel err {err:.3e})")

    def copy(self) -> "StateField":
        return StateField(
            rho=self.rho.copy(),
            momentum=self.momentum.copy(),
            rho_e=self.rho_e.copy(),
            p=self.p.copy(),
            constants=self.constants,
        )

    def checksum(self) -> str:
        import hashlib

        digest = hashlib.sha256()
        for arr in (self.rho, self.momentum, self.rho_e, self.p):
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()
