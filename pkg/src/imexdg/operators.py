"""Matrix-free DG operators for the semi-implicit Euler stage system.

All operators act on cell-major nodal coefficient arrays and return vectors
in the same layout representing integrals against the test functions (dual
vectors); no global matrix is ever assembled.  Volume terms contract the
cofactor columns stored in the mesh, so the Jacobian determinant only appears
where a plain volume weight is needed.

Two quadrature modes exist for the density-weighted velocity mass matrix:
``consistent`` integration on (2r+1)-point Gauss-Legendre rules (exact for
the triple-product integrand) and ``collocated`` integration on (r+1) points,
which commits an aliasing error for r > 1 but factorizes into one-dimensional
inverses.  Every other weak form uses consistent integration.
"""

import enum

import numpy as np

from .basis import Basis1D, tensor_apply, tensor_block_inverse_apply
from .errors import InvalidArgumentError, SolverFailureError, StateInvalidError
from .mesh import MeshGeometry, SLIP_WALL
from .parallel import SERIAL, ParallelContext
from .quadrature import tensor_weights
from .state import GasConstants, StateField


class IntegrationMode(enum.Enum):
    CONSISTENT = "consistent"
    COLLOCATED = "collocated"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return {"consistent": cls.CONSISTENT, "collocated": cls.COLLOCATED,
                    "fast": cls.COLLOCATED}[str(value).lower()]
        except KeyError:
            raise InvalidArgumentError(f"unknown integration mode {value!r}") from None


def _slab_indices(n1, dim):
    """Node indices of each face slab: slabs[k][side] -> ((n1)^(d-1),) array."""
    grid = np.arange(n1**dim).reshape([n1] * dim)  # axes ordered (z, y, x)
    slabs = []
    for k in range(dim):
        axis = dim - 1 - k
        lo = np.take(grid, 0, axis=axis).ravel()
        hi = np.take(grid, n1 - 1, axis=axis).ravel()
        slabs.append((lo, hi))
    return slabs


class DGOperators:
    """Operator factory bound to one mesh, one polynomial degree, one gas."""

    def __init__(self, mesh: MeshGeometry, constants: GasConstants = GasConstants(),
                 parallel: ParallelContext | None = None):
        self.mesh = mesh
        self.constants = constants
        self.parallel = parallel if parallel is not None else SERIAL
        self.dim = mesh.dim
        self.degree = mesh.degree
        self.n1 = mesh.degree + 1
        self.nodes_per_cell = self.n1**self.dim
        self.basis = {
            IntegrationMode.COLLOCATED: Basis1D.collocated(mesh.degree),
            IntegrationMode.CONSISTENT: Basis1D.consistent(mesh.degree),
        }
        self.slabs = _slab_indices(self.n1, self.dim)
        self._face_weights = {
            mode: tensor_weights(b.rule, self.dim - 1) for mode, b in self.basis.items()
        }
        cons = self.basis[IntegrationMode.CONSISTENT]
        vm = mesh.volume_metric(cons.rule.npoints)
        self._wdet = {IntegrationMode.CONSISTENT: vm.weights * vm.jac_det}
        coll = self.basis[IntegrationMode.COLLOCATED]
        vmc = mesh.volume_metric(coll.rule.npoints)
        self._wdet[IntegrationMode.COLLOCATED] = vmc.weights * vmc.jac_det
        self._affine = vm.jac_det.shape[0] == 1

    # ------------------------------------------------------------------
    # chunked primitive kernels
    # ------------------------------------------------------------------
    def _metric(self, mode):
        return self.mesh.volume_metric(self.basis[mode].rule.npoints)

    def interpolate(self, coeffs: np.ndarray, mode=IntegrationMode.CONSISTENT) -> np.ndarray:
        """Nodal coefficients (..., C, nn) -> values at quad points (..., C, nq)."""
        basis = self.basis[mode]
        nq = basis.rule.npoints**self.dim
        coeffs = np.asarray(coeffs, dtype=float)
        lead = coeffs.shape[:-1]
        out = np.empty(lead + (nq,))
        flat_in = coeffs.reshape(-1, self.nodes_per_cell)
        flat_out = out.reshape(-1, nq)
        shape = [self.n1] * self.dim

        def kernel(sl):
            block = flat_in[sl].reshape(-1, *shape)
            flat_out[sl] = tensor_apply(basis.interp_to_quad, block, self.dim).reshape(
                sl.stop - sl.start, nq
            )

        self.parallel.run_chunked(kernel, flat_in.shape[0])
        return out

    def _dual_from_quad(self, qvals: np.ndarray, mode) -> np.ndarray:
        """Test-function integrals of quad-point densities: S^T applied per axis."""
        basis = self.basis[mode]
        nqd = basis.rule.npoints
        lead = qvals.shape[:-1]
        out = np.empty(lead + (self.nodes_per_cell,))
        flat_in = qvals.reshape(-1, nqd**self.dim)
        flat_out = out.reshape(-1, self.nodes_per_cell)
        shape = [nqd] * self.dim

        def kernel(sl):
            block = flat_in[sl].reshape(-1, *shape)
            flat_out[sl] = tensor_apply(basis.interp_to_quad.T, block, self.dim).reshape(
                sl.stop - sl.start, self.nodes_per_cell
            )

        self.parallel.run_chunked(kernel, flat_in.shape[0])
        return out

    def _grad_ref(self, coeffs: np.ndarray, mode) -> np.ndarray:
        """Reference-space gradients at quad points: (..., C, nn) -> (..., C, d, nq)."""
        basis = self.basis[mode]
        nq = basis.rule.npoints**self.dim
        coeffs = np.asarray(coeffs, dtype=float)
        lead = coeffs.shape[:-1]
        out = np.empty(lead + (self.dim, nq))
        flat_in = coeffs.reshape(-1, self.nodes_per_cell)
        flat_out = out.reshape(-1, self.dim, nq)
        shape = [self.n1] * self.dim

        def kernel(sl):
            block = flat_in[sl].reshape(-1, *shape)
            for k in range(self.dim):
                mats = [basis.interp_to_quad] * self.dim
                mats[k] = basis.diff_at_quad
                flat_out[sl, k] = tensor_apply(mats, block, self.dim).reshape(
                    sl.stop - sl.start, nq
                )

        self.parallel.run_chunked(kernel, flat_in.shape[0])
        return out

    def _dual_from_ref_gradient(self, tvals: np.ndarray, mode) -> np.ndarray:
        """Sum_k D_k^T applied to per-direction quad densities (..., C, d, nq)."""
        basis = self.basis[mode]
        nqd = basis.rule.npoints
        lead = tvals.shape[:-2]
        out = np.zeros(lead + (self.nodes_per_cell,))
        flat_in = tvals.reshape(-1, self.dim, nqd**self.dim)
        flat_out = out.reshape(-1, self.nodes_per_cell)
        shape = [nqd] * self.dim

        def kernel(sl):
            acc = np.zeros((sl.stop - sl.start, self.nodes_per_cell))
            for k in range(self.dim):
                mats = [basis.interp_to_quad.T] * self.dim
                mats[k] = basis.diff_at_quad.T
                block = flat_in[sl, k].reshape(-1, *shape)
                acc += tensor_apply(mats, block, self.dim).reshape(
                    sl.stop - sl.start, self.nodes_per_cell
                )
            flat_out[sl] = acc

        self.parallel.run_chunked(kernel, flat_in.shape[0])
        return out

    # ------------------------------------------------------------------
    # face helpers
    # ------------------------------------------------------------------
    def _trace(self, coeffs: np.ndarray, cells: np.ndarray, direction: int, side: int,
               mode) -> np.ndarray:
        """Face-quad values of a nodal field on the given cells' face slab."""
        basis = self.basis[mode]
        slab = self.slabs[direction][side]
        vals = np.asarray(coeffs, dtype=float)[..., cells, :][..., slab]
        if self.dim == 2:
            return vals @ basis.interp_to_quad.T
        lead = vals.shape[:-1]
        block = vals.reshape(*lead, self.n1, self.n1)
        return tensor_apply(basis.interp_to_quad, block, 2).reshape(
            *lead, basis.rule.npoints**2
        )

    def _lift(self, face_density: np.ndarray, mode) -> np.ndarray:
        """Tangential test integrals: (F, nfq) -> (F, slab nodes)."""
        basis = self.basis[mode]
        if self.dim == 2:
            return face_density @ basis.interp_to_quad
        nqd = basis.rule.npoints
        lead = face_density.shape[:-1]
        block = face_density.reshape(*lead, nqd, nqd)
        return tensor_apply(basis.interp_to_quad.T, block, 2).reshape(*lead, self.n1**2)

    def _scatter(self, dual: np.ndarray, cells: np.ndarray, direction: int, side: int,
                 lifted: np.ndarray):
        """Accumulate lifted face integrals into the owning cells' slab nodes.

        Each cell appears at most once per face block, so fancy-indexed
        in-place addition is race- and buffering-safe.
        """
        slab = self.slabs[direction][side]
        dual[..., cells[:, None], slab[None, :]] += lifted

    # ------------------------------------------------------------------
    # spec operators
    # ------------------------------------------------------------------
    def apply_weighted_mass(self, rho: np.ndarray, U: np.ndarray,
                            mode=IntegrationMode.CONSISTENT,
                            rho_at_quad: np.ndarray | None = None) -> np.ndarray:
        """Density-weighted (block-diagonal) mass product A U, cell by cell."""
        mode = IntegrationMode.parse(mode)
        rho_q = self._weight_at_quad(rho, mode) if rho_at_quad is None else rho_at_quad
        u_q = self.interpolate(U, mode)
        if U.ndim == 3:
            rho_q = rho_q[:, None, :]
        return self._dual_from_quad(self._wdet[mode] * rho_q * u_q, mode)

    def _weight_at_quad(self, rho, mode):
        rho_q = self.interpolate(rho, mode)
        if np.any(rho_q <= 0):
            raise StateInvalidError("density is non-positive at a quadrature point")
        return rho_q

    def apply_pressure_gradient(self, P: np.ndarray) -> np.ndarray:
        """Weak pressure gradient with centered interior fluxes (momentum dual)."""
        mode = IntegrationMode.CONSISTENT
        vm = self._metric(mode)
        wq = vm.weights
        p_q = self.interpolate(P, mode)
        ncells = self.mesh.ncells
        out = np.empty((ncells, self.dim, self.nodes_per_cell))
        # volume: -sum_k D_k^T [ w p contra[k, c] ] per physical component c
        for c in range(self.dim):
            tk = wq * p_q[:, None, :] * vm.contra[..., c].swapaxes(-1, -2)
            tk = np.broadcast_to(tk, (ncells, self.dim, wq.size))
            out[:, c, :] = -self._dual_from_ref_gradient(tk, mode)

        for block in self.mesh.face_blocks:
            n1d = self.basis[mode].rule.npoints
            normal = block.normal[n1d]
            sj = block.sjac[n1d]
            w2 = self._face_weights[mode]
            p_left = self._trace(P, block.left_cells, block.direction, block.left_side, mode)
            if block.right_cells is None:
                phat = p_left  # slip wall: interior pressure
            else:
                p_right = self._trace(P, block.right_cells, block.direction, block.right_side, mode)
                phat = 0.5 * (p_left + p_right)
            for c in range(self.dim):
                lifted = self._lift(w2 * sj * phat * normal[..., c], mode)
                self._scatter(out[:, c, :], block.left_cells, block.direction,
                              block.left_side, lifted)
                if block.right_cells is not None:
                    self._scatter(out[:, c, :], block.right_cells, block.direction,
                                  block.right_side, -lifted)
        return out

    def apply_energy_divergence(self, U: np.ndarray, weight: np.ndarray,
                                weight_at_quad: np.ndarray | None = None) -> np.ndarray:
        """Weak divergence of (weight * u) with centered fluxes (pressure dual).

        ``weight`` holds nodal values of the transported density (rho h for
        the enthalpy term).  Slip walls contribute nothing: the mirrored
        normal velocity cancels in the centered flux.
        """
        mode = IntegrationMode.CONSISTENT
        vm = self._metric(mode)
        wq = vm.weights
        w_q = weight_at_quad if weight_at_quad is not None else self.interpolate(weight, mode)
        u_q = self.interpolate(U, mode)
        flux = w_q[:, None, :] * u_q  # physical flux components
        # T_k = w * contra[k, :] . flux
        tk = wq * np.einsum("cqki,ciq->ckq", np.broadcast_to(
            vm.contra, (self.mesh.ncells, wq.size, self.dim, self.dim)), flux)
        out = -self._dual_from_ref_gradient(tk, mode)

        n1d = self.basis[mode].rule.npoints
        w2 = self._face_weights[mode]
        for block in self.mesh.face_blocks:
            if block.right_cells is None:
                continue  # slip wall: zero normal flux for the mirrored state
            normal = block.normal[n1d]
            sj = block.sjac[n1d]
            wl = self._trace(weight, block.left_cells, block.direction, block.left_side, mode)
            wr = self._trace(weight, block.right_cells, block.direction, block.right_side, mode)
            un_l = np.zeros_like(wl)
            un_r = np.zeros_like(wr)
            for c in range(self.dim):
                un_l += normal[..., c] * self._trace(U[:, c, :], block.left_cells,
                                                     block.direction, block.left_side, mode)
                un_r += normal[..., c] * self._trace(U[:, c, :], block.right_cells,
                                                     block.direction, block.right_side, mode)
            fhat = 0.5 * (wl * un_l + wr * un_r)
            lifted = self._lift(w2 * sj * fhat, mode)
            self._scatter(out, block.left_cells, block.direction, block.left_side, lifted)
            self._scatter(out, block.right_cells, block.direction, block.right_side, -lifted)
        return out

    def apply_internal_energy_mass(self, P: np.ndarray, rho: np.ndarray) -> np.ndarray:
        """Internal-energy-weighted mass: integrals of rho e(P, rho) Psi_i.

        Linear in P for the ideal gas, where rho e(p, rho) = p/(gamma-1).
        """
        mode = IntegrationMode.CONSISTENT
        rho_q = self._weight_at_quad(rho, mode)
        p_q = self.interpolate(P, mode)
        dens = rho_q * p_q / ((self.constants.gamma - 1.0) * rho_q)
        return self._dual_from_quad(self._wdet[mode] * dens, mode)

    def internal_energy_diagonal(self, rho: np.ndarray) -> np.ndarray:
        """Diagonal of the internal-energy mass operator."""
        mode = IntegrationMode.CONSISTENT
        basis = self.basis[mode]
        s2 = basis.interp_to_quad**2
        dens = self._wdet[mode] / (self.constants.gamma - 1.0)
        dens = np.broadcast_to(dens, (self.mesh.ncells, dens.shape[-1]))
        nqd = basis.rule.npoints
        block = dens.reshape(-1, *([nqd] * self.dim))
        return tensor_apply(s2.T, block, self.dim).reshape(self.mesh.ncells, -1)

    def helmholtz_diagonal(self, p: np.ndarray, rho: np.ndarray, dt: float,
                           a_ll: float) -> np.ndarray:
        """Diagonal of the volumetric pressure-equation operator.

        Internal-energy mass diagonal plus the (a_ll dt)^2-scaled
        enthalpy-weighted gradient stiffness diagonal.
        """
        if dt < 0 or a_ll < 0:
            raise InvalidArgumentError("dt and a_ll must be non-negative")
        mode = IntegrationMode.CONSISTENT
        diag = self.internal_energy_diagonal(rho)
        if dt == 0.0 or a_ll == 0.0:
            return diag
        basis = self.basis[mode]
        vm = self._metric(mode)
        rho_q = self._weight_at_quad(rho, mode)
        p_q = self.interpolate(p, mode)
        if np.any(p_q <= 0):
            raise StateInvalidError("pressure is non-positive at a quadrature point")
        gamma = self.constants.gamma
        h_q = gamma * p_q / ((gamma - 1.0) * rho_q)  # e + p/rho
        scale = (a_ll * dt) ** 2 * self._wdet[mode] * h_q
        contra = np.broadcast_to(vm.contra,
                                 (self.mesh.ncells, vm.weights.size, self.dim, self.dim))
        det = np.broadcast_to(vm.jac_det, rho_q.shape)
        nqd = basis.rule.npoints
        sd = {}
        for k in range(self.dim):
            for kp in range(k, self.dim):
                g = np.einsum("cqi,cqi->cq", contra[:, :, k, :], contra[:, :, kp, :]) / det**2
                mats = []
                for m in range(self.dim):
                    if m == k and m == kp:
                        mats.append((basis.diff_at_quad**2).T)
                    elif m in (k, kp):
                        mats.append((basis.diff_at_quad * basis.interp_to_quad).T)
                    else:
                        mats.append((basis.interp_to_quad**2).T)
                dens = scale * g * (1.0 if k == kp else 2.0)
                block = dens.reshape(-1, *([nqd] * self.dim))
                diag = diag + tensor_apply(mats, block, self.dim).reshape(self.mesh.ncells, -1)
        return diag

    # ------------------------------------------------------------------
    # explicit advective terms
    # ------------------------------------------------------------------
    def explicit_advective_rhs(self, state: StateField):
        """Weak advective divergences with Rusanov fluxes plus gravity terms.

        Returns dual vectors (d_rho, d_mom, d_kin) defined so stage updates
        subtract a_lm dt times them: d_rho = div(rho u), d_mom holds
        div(rho u x u) - rho g, and d_kin holds div(k rho u) - rho g . u.
        The Rusanov speed is the advective normal velocity; pressure terms
        are handled by the implicitly integrated operators.
        """
        mode = IntegrationMode.CONSISTENT
        vm = self._metric(mode)
        wq = vm.weights
        ncells = self.mesh.ncells
        rho_q = self._weight_at_quad(state.rho, mode)
        u_q = self.interpolate(state.velocity(), mode)
        k_q = 0.5 * np.sum(u_q**2, axis=1)
        contra = np.broadcast_to(vm.contra, (ncells, wq.size, self.dim, self.dim))

        # volume terms: flux rows (rho u), (rho u u_c), (k rho u)
        mass_flux = rho_q[:, None, :] * u_q
        tk = wq * np.einsum("cqki,ciq->ckq", contra, mass_flux)
        d_rho = -self._dual_from_ref_gradient(tk, mode)

        d_mom = np.empty((ncells, self.dim, self.nodes_per_cell))
        for c in range(self.dim):
            tk = wq * np.einsum("cqki,ciq->ckq", contra, mass_flux * u_q[:, c : c + 1, :])
            d_mom[:, c, :] = -self._dual_from_ref_gradient(tk, mode)

        tk = wq * np.einsum("cqki,ciq->ckq", contra, mass_flux * k_q[:, None, :])
        d_kin = -self._dual_from_ref_gradient(tk, mode)

        # gravity sources (g points down the last coordinate)
        g = self.constants.g
        if g != 0.0:
            wdet = self._wdet[mode]
            d_mom[:, -1, :] += self._dual_from_quad(wdet * g * rho_q, mode)
            d_kin += self._dual_from_quad(wdet * g * rho_q * u_q[:, -1, :], mode)

        # face fluxes
        n1d = self.basis[mode].rule.npoints
        w2 = self._face_weights[mode]
        vel = state.velocity()
        for block in self.mesh.face_blocks:
            normal = block.normal[n1d]
            sj = block.sjac[n1d]
            k_dir, l_side = block.direction, block.left_side
            rho_l = self._trace(state.rho, block.left_cells, k_dir, l_side, mode)
            u_l = np.stack(
                [self._trace(vel[:, c, :], block.left_cells, k_dir, l_side, mode)
                 for c in range(self.dim)], axis=-1)
            un_l = np.einsum("fqc,fqc->fq", u_l, normal)
            if block.right_cells is None:
                if block.boundary != SLIP_WALL:
                    raise InvalidArgumentError(f"unsupported boundary {block.boundary}")
                rho_r = rho_l
                u_r = u_l - 2.0 * un_l[..., None] * normal
                un_r = -un_l
            else:
                rho_r = self._trace(state.rho, block.right_cells, k_dir, block.right_side, mode)
                u_r = np.stack(
                    [self._trace(vel[:, c, :], block.right_cells, k_dir, block.right_side, mode)
                     for c in range(self.dim)], axis=-1)
                un_r = np.einsum("fqc,fqc->fq", u_r, normal)
            lam = np.maximum(np.abs(un_l), np.abs(un_r))
            k_l = 0.5 * np.sum(u_l**2, axis=-1)
            k_r = 0.5 * np.sum(u_r**2, axis=-1)

            f_rho = 0.5 * (rho_l * un_l + rho_r * un_r) - 0.5 * lam * (rho_r - rho_l)
            f_mom = (
                0.5 * (rho_l * un_l)[..., None] * u_l
                + 0.5 * (rho_r * un_r)[..., None] * u_r
                - 0.5 * lam[..., None] * (rho_r[..., None] * u_r - rho_l[..., None] * u_l)
            )
            f_kin = 0.5 * (k_l * rho_l * un_l + k_r * rho_r * un_r) - 0.5 * lam * (
                k_r * rho_r - k_l * rho_l
            )

            scale = w2 * sj
            self._scatter(d_rho, block.left_cells, k_dir, l_side, self._lift(scale * f_rho, mode))
            self._scatter(d_kin, block.left_cells, k_dir, l_side, self._lift(scale * f_kin, mode))
            for c in range(self.dim):
                self._scatter(d_mom[:, c, :], block.left_cells, k_dir, l_side,
                              self._lift(scale * f_mom[..., c], mode))
            if block.right_cells is not None:
                r_side = block.right_side
                self._scatter(d_rho, block.right_cells, k_dir, r_side,
                              self._lift(-scale * f_rho, mode))
                self._scatter(d_kin, block.right_cells, k_dir, r_side,
                              self._lift(-scale * f_kin, mode))
                for c in range(self.dim):
                    self._scatter(d_mom[:, c, :], block.right_cells, k_dir, r_side,
                                  self._lift(-scale * f_mom[..., c], mode))
        return d_rho, d_mom, d_kin

    # ------------------------------------------------------------------
    # mass inversions
    # ------------------------------------------------------------------
    def collocated_weight_diag(self, rho: np.ndarray | None) -> np.ndarray:
        """w * detJ (* rho) at the collocated quadrature points, per cell."""
        wdet = np.broadcast_to(self._wdet[IntegrationMode.COLLOCATED],
                               (self.mesh.ncells, self._wdet[IntegrationMode.COLLOCATED].shape[-1]))
        if rho is None:
            return np.ascontiguousarray(wdet)
        rho_q = self._weight_at_quad(rho, IntegrationMode.COLLOCATED)
        return wdet * rho_q

    def mass_inverse(self, rho: np.ndarray, rhs: np.ndarray,
                     mode=IntegrationMode.CONSISTENT,
                     colloc_diag: np.ndarray | None = None,
                     rho_at_quad: np.ndarray | None = None) -> np.ndarray:
        """Invert the density-weighted mass block cell by cell.

        Collocated mode applies the factorized S^-T J^-1 S^-1 inverse in one
        pass.  Consistent mode runs per-cell CG on the consistently
        integrated operator, preconditioned with the collocated inverse,
        to 1e-12 relative residual.
        """
        mode = IntegrationMode.parse(mode)
        if colloc_diag is None:
            colloc_diag = self.collocated_weight_diag(rho)
        basis_c = self.basis[IntegrationMode.COLLOCATED]
        comp = rhs.ndim == 3
        flat = rhs.reshape(-1, self.nodes_per_cell)
        diag = colloc_diag[:, None, :].repeat(self.dim, axis=1).reshape(
            -1, colloc_diag.shape[-1]) if comp else colloc_diag

        out = np.empty_like(flat)

        def fast_kernel(sl):
            out[sl] = tensor_block_inverse_apply(basis_c, diag[sl], flat[sl], self.dim)

        if mode is IntegrationMode.COLLOCATED:
            self.parallel.run_chunked(fast_kernel, flat.shape[0])
            return out.reshape(rhs.shape)

        # consistent mode: preconditioned CG on each (cell, component) block
        rho_q = self._weight_at_quad(rho, IntegrationMode.CONSISTENT) \
            if rho_at_quad is None else rho_at_quad
        wrho = self._wdet[IntegrationMode.CONSISTENT] * rho_q
        wrho_flat = wrho[:, None, :].repeat(self.dim, axis=1).reshape(
            -1, wrho.shape[-1]) if comp else wrho
        basis = self.basis[IntegrationMode.CONSISTENT]
        shape_n = [self.n1] * self.dim
        shape_q = [basis.rule.npoints] * self.dim

        def apply_local(x, sl):
            v = tensor_apply(basis.interp_to_quad, x.reshape(-1, *shape_n), self.dim)
            v = v.reshape(x.shape[0], -1) * wrho_flat[sl]
            return tensor_apply(basis.interp_to_quad.T, v.reshape(-1, *shape_q),
                                self.dim).reshape(x.shape[0], -1)

        def prec(x, sl):
            return tensor_block_inverse_apply(basis_c, diag[sl], x, self.dim)

        max_iter, tol = 200, 1e-12

        def cg_kernel(sl):
            b = flat[sl]
            bnorm = np.linalg.norm(b, axis=1)
            bnorm = np.where(bnorm == 0, 1.0, bnorm)
            x = np.zeros_like(b)
            r = b.copy()
            z = prec(r, sl)
            p = z.copy()
            rz = np.einsum("ij,ij->i", r, z)
            for it in range(max_iter):
                res = np.linalg.norm(r, axis=1) / bnorm
                if np.all(res <= tol):
                    break
                ap = apply_local(p, sl)
                pap = np.einsum("ij,ij->i", p, ap)
                alpha = np.where(pap > 0, rz / np.where(pap == 0, 1.0, pap), 0.0)
                x += alpha[:, None] * p
                r -= alpha[:, None] * ap
                z = prec(r, sl)
                rz_new = np.einsum("ij,ij->i", r, z)
                beta = rz_new / np.where(rz == 0, 1.0, rz)
                p = z + beta[:, None] * p
                rz = rz_new
            else:
                res = np.linalg.norm(r, axis=1) / bnorm
                worst = int(np.argmax(res))
                raise SolverFailureError(
                    f"consistent mass inverse: CG stalled at rel residual "
                    f"{res[worst]:.3e}", cell=sl.start + worst)
            out[sl] = x

        self.parallel.run_chunked(cg_kernel, flat.shape[0])
        return out.reshape(rhs.shape)

    # ------------------------------------------------------------------
    # plain (unweighted) scalar mass
    # ------------------------------------------------------------------
    def project_scalar(self, nodal: np.ndarray) -> np.ndarray:
        """Consistently integrated plain-mass product (dual of a nodal field)."""
        vals = self.interpolate(nodal, IntegrationMode.CONSISTENT)
        return self._dual_from_quad(self._wdet[IntegrationMode.CONSISTENT] * vals,
                                    IntegrationMode.CONSISTENT)

    def scalar_mass_inverse(self, dual: np.ndarray) -> np.ndarray:
        """Invert the plain scalar mass matrix.

        Exact through the collocated factorization on affine meshes; on
        terrain meshes a short preconditioned CG removes the small
        geometric aliasing between the two quadrature rules.
        """
        basis_c = self.basis[IntegrationMode.COLLOCATED]
        diag = np.broadcast_to(
            self._wdet[IntegrationMode.COLLOCATED],
            (self.mesh.ncells,) + self._wdet[IntegrationMode.COLLOCATED].shape[-1:],
        )
        comp = dual.ndim == 3
        flat = dual.reshape(-1, self.nodes_per_cell)
        dflat = diag[:, None, :].repeat(self.dim, axis=1).reshape(
            -1, diag.shape[-1]) if comp else diag
        if self._affine:
            out = tensor_block_inverse_apply(basis_c, dflat, flat, self.dim)
            return out.reshape(dual.shape)
        ones = np.ones((self.mesh.ncells, self.nodes_per_cell))
        out = self.mass_inverse(ones, dual, IntegrationMode.CONSISTENT)
        return out

    def kinetic_energy_dual(self, rho: np.ndarray, velocity: np.ndarray) -> np.ndarray:
        """Integrals of rho |u|^2/2 against the pressure test functions."""
        mode = IntegrationMode.CONSISTENT
        rho_q = self._weight_at_quad(rho, mode)
        u_q = self.interpolate(velocity, mode)
        k_q = 0.5 * np.sum(u_q**2, axis=1)
        return self._dual_from_quad(self._wdet[mode] * rho_q * k_q, mode)

    def integrate_scalar(self, nodal: np.ndarray) -> float:
        """Integral of a nodal scalar field over the whole mesh."""
        vals = self.interpolate(nodal, IntegrationMode.CONSISTENT)
        return float(np.sum(self._wdet[IntegrationMode.CONSISTENT] * vals))

    def max_wave_speed(self, state: StateField) -> tuple[float, float]:
        """(max |u|, max sound speed) at the solution nodes, for CFL reports."""
        umax = float(np.max(np.linalg.norm(state.velocity(), axis=1)))
        cmax = float(np.max(np.sqrt(self.constants.gamma * state.p / state.rho)))
        return umax, cmax
