"""Dense-assembly oracles for the matrix-free operators.

Everything here is built from explicit Kronecker Vandermonde matrices and
plain Python loops over cells and faces -- deliberately independent of the
sum-factorized evaluation paths it is used to check.
"""

import numpy as np

from imexdg.basis import Basis1D
from imexdg.operators import DGOperators, IntegrationMode
from imexdg.quadrature import tensor_weights


def kron_chain(mats):
    """Kronecker product with the first direction fastest (last kron factor)."""
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(m, out)
    return out


def vandermonde(basis: Basis1D, dim: int) -> np.ndarray:
    return kron_chain([basis.interp_to_quad] * dim)


def grad_vandermonde(basis: Basis1D, dim: int, k: int) -> np.ndarray:
    mats = [basis.interp_to_quad] * dim
    mats[k] = basis.diff_at_quad
    return kron_chain(mats)


def face_vandermonde(basis: Basis1D, dim: int) -> np.ndarray:
    if dim == 2:
        return basis.interp_to_quad
    return kron_chain([basis.interp_to_quad] * 2)


class DenseAssembler:
    """Assembles global dense matrices for the weak forms on a small mesh."""

    def __init__(self, ops: DGOperators, mode=IntegrationMode.CONSISTENT):
        self.ops = ops
        self.mode = IntegrationMode.parse(mode)
        self.mesh = ops.mesh
        self.dim = ops.dim
        self.basis = ops.basis[self.mode]
        self.vm = self.mesh.volume_metric(self.basis.rule.npoints)
        self.nn = ops.nodes_per_cell
        self.ncells = self.mesh.ncells
        self.N = self.ncells * self.nn
        self.V = vandermonde(self.basis, self.dim)
        self.G = [grad_vandermonde(self.basis, self.dim, k) for k in range(self.dim)]
        self.Vf = face_vandermonde(self.basis, self.dim)
        self.wq = self.vm.weights
        self.w2 = tensor_weights(self.basis.rule, self.dim - 1)
        self.det = np.broadcast_to(self.vm.jac_det, (self.ncells, self.wq.size))
        self.contra = np.broadcast_to(
            self.vm.contra, (self.ncells, self.wq.size, self.dim, self.dim)
        )

    def cell_dofs(self, cell):
        return np.arange(cell * self.nn, (cell + 1) * self.nn)

    def quad_values(self, nodal):
        """Quadrature values per cell via the dense Vandermonde."""
        return nodal @ self.V.T

    def mass_matrix(self, coeff_at_quad):
        """Block-diagonal mass with an arbitrary per-quad-point coefficient."""
        M = np.zeros((self.N, self.N))
        for c in range(self.ncells):
            w = self.wq * self.det[c] * coeff_at_quad[c]
            idx = self.cell_dofs(c)
            M[np.ix_(idx, idx)] = self.V.T @ (w[:, None] * self.V)
        return M

    def stiffness_matrix(self, coeff_at_quad):
        """Gradient-gradient matrix with a per-quad-point coefficient."""
        K = np.zeros((self.N, self.N))
        for c in range(self.ncells):
            idx = self.cell_dofs(c)
            gphys = []  # physical gradient Vandermonde per component
            for comp in range(self.dim):
                g = np.zeros_like(self.G[0])
                for k in range(self.dim):
                    g += (self.contra[c, :, k, comp] / self.det[c])[:, None] * self.G[k]
                gphys.append(g)
            w = self.wq * self.det[c] * coeff_at_quad[c]
            for comp in range(self.dim):
                K[np.ix_(idx, idx)] += gphys[comp].T @ (w[:, None] * gphys[comp])
        return K

    def _face_trace_matrix(self, block, side_cells, direction, side):
        """Rows: face quad points; columns: global dofs (one cell per face)."""
        slab = self.ops.slabs[direction][side]
        mats = []
        for f, cell in enumerate(side_cells):
            T = np.zeros((self.Vf.shape[0], self.N))
            T[:, cell * self.nn + slab] = self.Vf
            mats.append(T)
        return mats

    def gradient_matrix(self):
        """Weak pressure gradient: maps scalar dofs to (dim, N) stacked rows."""
        B = np.zeros((self.dim, self.N, self.N))
        for c in range(self.ncells):
            idx = self.cell_dofs(c)
            for comp in range(self.dim):
                acc = np.zeros((self.nn, self.nn))
                for k in range(self.dim):
                    w = self.wq * self.contra[c, :, k, comp]
                    acc -= self.G[k].T @ (w[:, None] * self.V)
                B[comp][np.ix_(idx, idx)] += acc
        n1d = self.basis.rule.npoints
        for block in self.mesh.face_blocks:
            normals = block.normal[n1d]
            sjacs = block.sjac[n1d]
            TL = self._face_trace_matrix(block, block.left_cells, block.direction, block.left_side)
            TR = (
                self._face_trace_matrix(block, block.right_cells, block.direction, block.right_side)
                if block.right_cells is not None
                else None
            )
            for f in range(block.nfaces):
                phat = TL[f] if TR is None else 0.5 * (TL[f] + TR[f])
                for comp in range(self.dim):
                    w = self.w2 * sjacs[f] * normals[f, :, comp]
                    B[comp] += TL[f].T @ (w[:, None] * phat)
                    if TR is not None:
                        B[comp] -= TR[f].T @ (w[:, None] * phat)
        return B

    def divergence_matrix(self, weight_nodal):
        """Weak divergence of (weight u): maps (dim, N) dofs to scalar duals."""
        wquad = self.quad_values(weight_nodal)
        C = np.zeros((self.dim, self.N, self.N))  # C[comp] acts on component comp
        for c in range(self.ncells):
            idx = self.cell_dofs(c)
            for comp in range(self.dim):
                acc = np.zeros((self.nn, self.nn))
                for k in range(self.dim):
                    w = self.wq * self.contra[c, :, k, comp] * wquad[c]
                    acc -= self.G[k].T @ (w[:, None] * self.V)
                C[comp][np.ix_(idx, idx)] += acc
        n1d = self.basis.rule.npoints
        for block in self.mesh.face_blocks:
            if block.right_cells is None:
                continue  # slip wall: mirrored normal flux cancels
            normals = block.normal[n1d]
            sjacs = block.sjac[n1d]
            TL = self._face_trace_matrix(block, block.left_cells, block.direction, block.left_side)
            TR = self._face_trace_matrix(block, block.right_cells, block.direction, block.right_side)
            for f in range(block.nfaces):
                wl = self.w2 * sjacs[f]
                # centered flux of weight * u . n
                wq_l = TL[f] @ weight_nodal.ravel()
                wq_r = TR[f] @ weight_nodal.ravel()
                for comp in range(self.dim):
                    n_c = normals[f, :, comp]
                    half_l = 0.5 * wq_l * n_c
                    half_r = 0.5 * wq_r * n_c
                    C[comp] += TL[f].T @ ((wl * half_l)[:, None] * TL[f])
                    C[comp] += TL[f].T @ ((wl * half_r)[:, None] * TR[f])
                    C[comp] -= TR[f].T @ ((wl * half_l)[:, None] * TL[f])
                    C[comp] -= TR[f].T @ ((wl * half_r)[:, None] * TR[f])
        return C

    def internal_energy_matrix(self):
        gamma = self.ops.constants.gamma
        ones = np.ones((self.ncells, self.wq.size))
        return self.mass_matrix(ones / (gamma - 1.0))

    def helmholtz_matrix(self, p_nodal, rho_nodal, dt, a_ll):
        gamma = self.ops.constants.gamma
        p_q = self.quad_values(p_nodal)
        rho_q = self.quad_values(rho_nodal)
        h_q = gamma * p_q / ((gamma - 1.0) * rho_q)
        return self.internal_energy_matrix() + (a_ll * dt) ** 2 * self.stiffness_matrix(h_q)
