"""Eigenanalysis of interacting urn systems: limits, rates, covariances.

Everything is driven by matrices with K x K blocks w_jh H^j. Because the
columns of every normalized H^j sum to one, the spectrum of the interaction
block W is inherited by these matrices, with block-constant left eigenvectors.
The remaining (residual) eigenpairs determine the second-order behavior:

* the right Perron eigenvector gives the limiting proportions of a leader;
* the residual eigenvalue with largest real part sets the convergence rate;
* a spectral sum over residual pairs gives the CLT covariance when every
  residual eigenvalue has real part below one half.

Followers are analyzed jointly with everything upstream of them. Upstream
eigendirections annihilated by the cross-coupling blocks do not influence a
follower and are removed first, through a change of basis that leaves the
follower's own coordinates untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DefectiveMatrix,
    IllConditionedReduction,
    InternalInvariantViolation,
    NonSimplePerron,
    RegimeMismatch,
    SingularSolve,
)
from .model import ValidatedSystem
from .partition import PartitionResult, partition_system

COND_LIMIT = 1e8        # eigenvector matrix condition beyond which Q is treated as defective
EIG_MATCH_TOL = 1e-7    # relative tolerance when matching eigenvalues across spectra
PERRON_TOL = 1e-9       # simplicity test for the eigenvalue 1
REGIME_BAND = 1e-9      # half-width of the Re(lambda*) = 1/2 boundary band
NULLSPACE_TOL = 1e-9    # singular values below this count as annihilated
BLOCKSUM_TOL = 1e-7     # per-urn block sums above this mark an inherited eigenvector

REGIME_SQRT_N = "sqrt_n"
REGIME_SQRT_N_LOG = "sqrt_n_over_log_n"
REGIME_POLYNOMIAL = "polynomial"


# ---------------------------------------------------------------------------
# Block matrix builders


def build_q_block(system: ValidatedSystem, urns) -> np.ndarray:
    """Matrix over the given urns with K x K block (j, h) equal to w_jh H^j."""
    K = system.K
    s = len(urns)
    Q = np.zeros((s * K, s * K))
    for a, j in enumerate(urns):
        Hj = system.urns[j].H
        for b, h in enumerate(urns):
            w = system.W[j, h]
            if w != 0.0:
                Q[a * K : (a + 1) * K, b * K : (b + 1) * K] = w * Hj
    return Q


def build_q_cross(system: ValidatedSystem, row_urns, col_urns) -> np.ndarray:
    """Coupling blocks w_jh H^j from the col_urns (upstream) into the row_urns."""
    K = system.K
    Q = np.zeros((len(row_urns) * K, len(col_urns) * K))
    for a, j in enumerate(row_urns):
        Hj = system.urns[j].H
        for b, h in enumerate(col_urns):
            w = system.W[j, h]
            if w != 0.0:
                Q[a * K : (a + 1) * K, b * K : (b + 1) * K] = w * Hj
    return Q


# ---------------------------------------------------------------------------
# Eigen machinery


@dataclass(eq=False)
class EigenData:
    """Complete eigen-decomposition of a (possibly joint) subsystem matrix.

    right holds right eigenvectors as columns, left holds left eigenvectors
    as rows with left @ right = I. inherited marks eigenpairs lifted from the
    interaction matrix; block_of records which diagonal block a pair belongs
    to (always 0 for a single subsystem).
    """

    q: np.ndarray
    values: np.ndarray
    right: np.ndarray
    left: np.ndarray
    inherited: np.ndarray
    block_of: np.ndarray
    cond: float
    w_values: np.ndarray
    lifted_left: np.ndarray
    n_urns: int
    k: int

    @property
    def clusters(self):
        return _cluster_indices(self.values)


def _block_sums(X, n_urns, k):
    """Per-urn sums of the K-blocks of each column: (n_urns, ncols)."""
    return X.reshape(n_urns, k, -1).sum(axis=1)


def _cluster_indices(values):
    tol = EIG_MATCH_TOL * max(1.0, float(np.abs(values).max(initial=0.0)))
    d = len(values)
    used = np.zeros(d, dtype=bool)
    clusters = []
    for i in range(d):
        if used[i]:
            continue
        group = [i]
        used[i] = True
        for j in range(i + 1, d):
            if not used[j] and abs(values[j] - values[i]) <= tol:
                group.append(j)
                used[j] = True
        clusters.append(np.array(group))
    return clusters


def _match_count(w_values, value, tol):
    return int(np.sum(np.abs(w_values - value) <= tol))


def _normalize_columns(V):
    for i in range(V.shape[1]):
        col = V[:, i]
        nrm = np.linalg.norm(col)
        if nrm == 0.0:
            raise InternalInvariantViolation("zero eigenvector column")
        col = col / nrm
        j = int(np.argmax(np.abs(col)))
        phase = col[j] / abs(col[j])
        V[:, i] = col / phase


def _rotate_degenerate(values, right, w_values, n_urns, k):
    """Split repeated eigenvalues so each eigenvector is purely inherited or residual.

    Within a numerically repeated eigenvalue the computed basis may mix the
    block-constant-dual (inherited) directions with residual ones; the
    inherited count equals the eigenvalue's multiplicity in Sp(W), and the
    residual directions are the null space of the per-urn block-sum matrix.
    """
    tol = EIG_MATCH_TOL * max(1.0, float(np.abs(values).max(initial=0.0)))
    for idx in _cluster_indices(values):
        m = len(idx)
        if m < 2:
            continue
        m_w = _match_count(w_values, values[idx[0]], tol)
        if m_w == 0 or m_w >= m:
            continue
        Vc = right[:, idx]
        S = _block_sums(Vc, n_urns, k)
        _, _, Vh = np.linalg.svd(S)
        right[:, idx] = Vc @ Vh.conj().T  # leading m_w columns span range(S)


def eigen_decompose(Q, W_block, k) -> EigenData:
    """Eigen-decomposition of a single subsystem matrix with inherited/residual split.

    Raises DefectiveMatrix when the eigenvector matrix is numerically rank
    deficient (condition number above 1e8).
    """
    Q = np.asarray(Q, dtype=float)
    W_block = np.atleast_2d(np.asarray(W_block, dtype=float))
    n_urns = W_block.shape[0]
    if Q.shape != (n_urns * k, n_urns * k):
        raise InternalInvariantViolation("Q shape inconsistent with W block and K")

    values, right = np.linalg.eig(Q)
    cond = float(np.linalg.cond(right))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DefectiveMatrix(
            f"eigenvector matrix condition {cond:.3g} exceeds {COND_LIMIT:.0e}; "
            "matrix is (near-)defective"
        )

    w_values, lifted = _lift_left_eigenvectors(W_block, k)
    _check_lifted(lifted, w_values, Q)
    _rotate_degenerate(values, right, w_values, n_urns, k)
    _normalize_columns(right)
    left = np.linalg.inv(right)

    bs = _block_sums(right, n_urns, k)
    inherited = np.linalg.norm(bs, axis=0) > BLOCKSUM_TOL

    tol = EIG_MATCH_TOL * max(1.0, float(np.abs(values).max()))
    inh_vals = np.sort_complex(values[inherited])
    w_sorted = np.sort_complex(w_values)
    if len(inh_vals) != len(w_sorted) or (
        len(w_sorted) and np.abs(inh_vals - w_sorted).max() > 10 * tol
    ):
        raise InternalInvariantViolation(
            "inherited eigenvalues do not reproduce the interaction spectrum: "
            f"{inh_vals} vs {w_sorted}"
        )

    return EigenData(
        q=Q,
        values=values,
        right=right,
        left=left,
        inherited=inherited,
        block_of=np.zeros(len(values), dtype=int),
        cond=cond,
        w_values=w_values,
        lifted_left=lifted,
        n_urns=n_urns,
        k=k,
    )


def _lift_left_eigenvectors(W_block, k):
    """Left eigenvectors of W lifted to block-constant left eigenvectors of Q.

    Returns (eigenvalues, rows); the i-th row satisfies row @ Q = lam_i * row
    (plain transpose pairing, eigenvectors of W.T are untouched).
    """
    wvals, wl = np.linalg.eig(W_block.T)
    ones = np.ones(k)
    lifted = np.stack([np.kron(wl[:, i], ones) for i in range(len(wvals))])
    return wvals, lifted


def _check_lifted(lifted, w_values, Q):
    for u, lam in zip(lifted, w_values):
        res = np.abs(u @ Q - lam * u).max()
        if res > 1e-9 * max(1.0, np.abs(Q).max()):
            raise InternalInvariantViolation(
                f"lifted left eigenvector residual {res:.3g} for eigenvalue {lam}"
            )


def joint_eigen(system: ValidatedSystem, part: PartitionResult, upto: int) -> tuple[np.ndarray, EigenData]:
    """Eigen-decomposition of the joint matrix over classes 0..upto.

    Built structurally: each diagonal block is decomposed on its own, then its
    eigenvectors are completed downward through the coupling blocks. This
    keeps exact zeros in the block pattern and records, per eigenpair, the
    diagonal block it originates from.
    """
    K = system.K
    blocks = [part.classes[c] for c in range(upto + 1)]
    urns = [j for comp in blocks for j in comp]
    dim = len(urns) * K
    offsets = np.concatenate([[0], np.cumsum([len(c) * K for c in blocks])])

    diag_eigs = []
    diag_qs = []
    for comp in blocks:
        Qb = build_q_block(system, comp)
        Wb = system.W[np.ix_(list(comp), list(comp))]
        diag_eigs.append(eigen_decompose(Qb, Wb, K))
        diag_qs.append(Qb)

    cross = {}
    for b_row in range(len(blocks)):
        for b_col in range(b_row):
            C = build_q_cross(system, blocks[b_row], blocks[b_col])
            if np.any(C):
                cross[(b_row, b_col)] = C

    values = []
    columns = []
    inherited = []
    block_of = []
    for b, eig in enumerate(diag_eigs):
        for i in range(len(eig.values)):
            lam = eig.values[i]
            x = np.zeros(dim, dtype=complex)
            x[offsets[b] : offsets[b + 1]] = eig.right[:, i]
            for jb in range(b + 1, len(blocks)):
                rhs = np.zeros(offsets[jb + 1] - offsets[jb], dtype=complex)
                for hb in range(b, jb):
                    C = cross.get((jb, hb))
                    if C is not None:
                        rhs = rhs + C @ x[offsets[hb] : offsets[hb + 1]]
                if not np.any(rhs):
                    continue
                M = lam * np.eye(len(rhs)) - diag_qs[jb]
                if np.linalg.cond(M) > 1e12:
                    raise DefectiveMatrix(
                        f"eigenvalue {lam} of block {b} collides with the spectrum "
                        f"of downstream block {jb}"
                    )
                x[offsets[jb] : offsets[jb + 1]] = np.linalg.solve(M, rhs)
            values.append(lam)
            columns.append(x)
            inherited.append(eig.inherited[i])
            block_of.append(b)

    values = np.array(values)
    right = np.array(columns).T
    _normalize_columns(right)
    cond = float(np.linalg.cond(right))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DefectiveMatrix(
            f"joint eigenvector matrix condition {cond:.3g} exceeds {COND_LIMIT:.0e}"
        )
    left = np.linalg.inv(right)

    Q_joint = build_q_block(system, urns)
    W_joint = system.W[np.ix_(urns, urns)]
    w_values, lifted = _lift_left_eigenvectors(W_joint, K)
    _check_lifted(lifted, w_values, Q_joint)

    eig = EigenData(
        q=Q_joint,
        values=values,
        right=right,
        left=left,
        inherited=np.array(inherited, dtype=bool),
        block_of=np.array(block_of, dtype=int),
        cond=cond,
        w_values=w_values,
        lifted_left=lifted,
        n_urns=len(urns),
        k=K,
    )
    return Q_joint, eig


# ---------------------------------------------------------------------------
# First-order limits


def leader_limit(eig: EigenData) -> np.ndarray:
    """Right eigenvector at the simple eigenvalue 1, each urn block summing to 1.

    Simplicity of the eigenvalue 1 is exactly the irreducibility requirement
    on the mean matrices; violation raises NonSimplePerron.
    """
    idx = np.nonzero(np.abs(eig.values - 1.0) <= PERRON_TOL)[0]
    if len(idx) != 1:
        raise NonSimplePerron(
            f"eigenvalue 1 has multiplicity {len(idx)}; generating matrices must be "
            "irreducible for a leading system"
        )
    v = eig.right[:, idx[0]]
    if np.abs(v.imag).max() > 1e-9:
        raise InternalInvariantViolation("Perron eigenvector has an imaginary part")
    v = v.real.copy()
    s = v.reshape(eig.n_urns, eig.k).sum(axis=1)
    if np.any(np.abs(s) < 1e-12):
        raise InternalInvariantViolation("Perron eigenvector has a zero urn block")
    v = (v.reshape(eig.n_urns, eig.k) / s[:, None]).reshape(-1)
    if v.min() < -1e-12:
        raise InternalInvariantViolation(
            f"Perron eigenvector entry {v.min():.3g} below tolerance"
        )
    return np.clip(v, 0.0, None)


def follower_limit(Q_own, Q_cross, z_upstream) -> np.ndarray:
    """Solve (I - Q^l) z = Q^{l(l-)} z_upstream for the follower limit."""
    Q_own = np.asarray(Q_own, dtype=float)
    A = np.eye(Q_own.shape[0]) - Q_own
    if np.linalg.cond(A) > 1e12:
        raise SingularSolve(
            "I - Q is numerically singular; the subsystem is not a follower"
        )
    z = np.linalg.solve(A, np.asarray(Q_cross) @ np.asarray(z_upstream, dtype=float))
    return z


# ---------------------------------------------------------------------------
# Removal of annihilated upstream components


def compute_a_out(joint: EigenData, Q_cross, own_block: int):
    """Upstream eigenvalues whose eigenspace meets the null space of the coupling.

    For each repeated-eigenvalue cluster among upstream eigenpairs, restrict
    the coupling matrix to an orthonormal eigenspace basis and count singular
    values below tolerance; any deficiency puts the eigenvalue in A_OUT and
    marks every upstream eigenpair of that cluster as removed.
    """
    up_dim = Q_cross.shape[1]
    out_mask = np.zeros(len(joint.values), dtype=bool)
    a_out = []
    for idx in joint.clusters:
        up_idx = idx[joint.block_of[idx] < own_block]
        if len(up_idx) == 0:
            continue
        B = joint.right[:up_dim, up_idx]
        Borth, _ = np.linalg.qr(B)
        sv = np.linalg.svd(Q_cross @ Borth, compute_uv=False)
        n_zero = len(up_idx) - int(np.sum(sv > NULLSPACE_TOL))
        if n_zero >= 1:
            a_out.append(joint.values[up_idx[0]])
            out_mask[up_idx] = True
    return a_out, out_mask


@dataclass(eq=False)
class ReducedSystem:
    """Conjugate bases removing annihilated components, identity on the follower block.

    b_hat and c_hat are real n x d matrices with c_hat.T @ b_hat = I and
    b_hat @ c_hat.T equal to the spectral projector onto the kept eigenspace;
    the reduced process is c_hat.T @ Z and the reduced matrix c_hat.T Q b_hat.
    """

    a_out: tuple
    b_hat: np.ndarray
    c_hat: np.ndarray
    q_reduced: np.ndarray
    out_mask: np.ndarray
    identity: bool
    own_dim: int


def _realify_columns(values, V):
    """Real basis of a conjugation-closed span of eigenvector columns."""
    cols = []
    consumed = np.zeros(V.shape[1], dtype=bool)
    for i in range(V.shape[1]):
        if consumed[i]:
            continue
        lam = values[i]
        if abs(lam.imag) <= 1e-12:
            cols.append(V[:, i].real)
            consumed[i] = True
            continue
        partner = None
        for j in range(i + 1, V.shape[1]):
            if not consumed[j] and abs(values[j] - lam.conjugate()) <= 1e-9 * max(1.0, abs(lam)):
                partner = j
                break
        if partner is None:
            raise InternalInvariantViolation(
                f"complex eigenvalue {lam} kept without its conjugate partner"
            )
        cols.append(V[:, i].real)
        cols.append(V[:, i].imag)
        consumed[i] = consumed[partner] = True
    return np.column_stack(cols)


def reduce_follower(joint: EigenData, out_mask, own_dim: int, a_out) -> ReducedSystem:
    """Build the block-preserving conjugate bases that drop A_OUT components.

    With nothing to remove the reduction is the identity. Otherwise the kept
    upstream eigenvectors are realified and orthonormalized into the top-left
    block of b_hat, the follower block stays the identity, and c_hat follows
    from the spectral projector onto the kept eigenspace.
    """
    n = joint.q.shape[0]
    if not out_mask.any():
        eye = np.eye(n)
        return ReducedSystem(
            a_out=tuple(a_out),
            b_hat=eye,
            c_hat=eye.copy(),
            q_reduced=joint.q.copy(),
            out_mask=out_mask,
            identity=True,
            own_dim=own_dim,
        )

    up_dim = n - own_dim
    own_block = joint.block_of.max()
    keep = ~out_mask
    up_in = np.nonzero(keep & (joint.block_of < own_block))[0]
    in_idx = np.nonzero(keep)[0]

    X = _realify_columns(joint.values[up_in], joint.right[:up_dim, up_in])
    Qx, Rx = np.linalg.qr(X)
    diag = np.abs(np.diag(Rx))
    if diag.size and (diag.min() == 0.0 or diag.max() / diag.min() > 1e8):
        raise IllConditionedReduction(
            "kept upstream eigenvectors are numerically dependent"
        )

    d = X.shape[1] + own_dim
    b_hat = np.zeros((n, d))
    b_hat[:up_dim, : X.shape[1]] = Qx
    b_hat[up_dim:, X.shape[1] :] = np.eye(own_dim)

    proj = joint.right[:, in_idx] @ joint.left[in_idx]
    if np.abs(proj.imag).max() > 1e-9:
        raise InternalInvariantViolation("spectral projector has an imaginary part")
    proj = proj.real
    c_hat = (b_hat.T @ proj).T

    q_reduced = c_hat.T @ joint.q @ b_hat

    if np.abs(c_hat.T @ b_hat - np.eye(d)).max() > 1e-8:
        raise InternalInvariantViolation("conjugate bases are not biorthogonal")
    if np.abs(b_hat @ c_hat.T - proj).max() > 1e-8:
        raise InternalInvariantViolation("conjugate bases do not reproduce the projector")

    return ReducedSystem(
        a_out=tuple(a_out),
        b_hat=b_hat,
        c_hat=c_hat,
        q_reduced=q_reduced,
        out_mask=out_mask,
        identity=False,
        own_dim=own_dim,
    )


# ---------------------------------------------------------------------------
# Second-order quantities


def lambda_star(values, inherited, out_mask=None):
    """Residual eigenvalue with highest real part and the induced rate regime.

    Returns (lam, regime, exponent, boundary, empty). With an empty residual
    spectrum (every eigenvalue inherited, e.g. K = 1) the regime is sqrt_n
    with a zero covariance and lam is None.
    """
    mask = ~np.asarray(inherited, dtype=bool)
    if out_mask is not None:
        mask &= ~np.asarray(out_mask, dtype=bool)
    if not mask.any():
        return None, REGIME_SQRT_N, 0.5, False, True
    cand = np.asarray(values)[mask]
    order = np.lexsort((-np.abs(cand.imag), -cand.real))
    lam = complex(cand[order[0]])
    re = lam.real
    if abs(re - 0.5) <= REGIME_BAND:
        return lam, REGIME_SQRT_N_LOG, 0.5, True, False
    if re < 0.5:
        return lam, REGIME_SQRT_N, 0.5, False, False
    return lam, REGIME_POLYNOMIAL, 1.0 - re, False, False


def rate_string(regime, exponent):
    """Human-readable rate: sqrt(n), sqrt(n/log n), or n^a (two decimals)."""
    if regime == REGIME_SQRT_N:
        return "sqrt(n)"
    if regime == REGIME_SQRT_N_LOG:
        return "sqrt(n/log n)"
    return f"n^{round(exponent, 2):g}"


def compute_g(system: ValidatedSystem, z_all: np.ndarray) -> list[np.ndarray]:
    """Per-urn martingale-increment covariance blocks at the limit configuration.

    G^j = sum_i (C^j(i) + H_i H_i') ztilde_i - z z', with ztilde the
    W-mixture of the limiting proportions.
    """
    ztilde = system.W @ z_all
    out = []
    for j, model in enumerate(system.urns):
        H = model.H
        C = model.column_covariances()
        M = np.zeros((system.K, system.K))
        for i in range(system.K):
            M += (C[i] + np.outer(H[:, i], H[:, i])) * ztilde[j, i]
        out.append(M - np.outer(z_all[j], z_all[j]))
    return out


def block_diag(blocks) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    at = 0
    for b in blocks:
        out[at : at + b.shape[0], at : at + b.shape[1]] = b
        at += b.shape[0]
    return out


def build_f_m(eig: EigenData, m: float, out_mask=None, reduction: ReducedSystem | None = None):
    """Jacobian of the simplex-extended drift: (I - Q) + m * (inherited projectors).

    With a reduction supplied, returns the reduced Jacobian on the kept
    coordinates. Only the numeric covariance oracle consumes this.
    """
    keep = np.ones(len(eig.values), dtype=bool) if out_mask is None else ~np.asarray(out_mask, bool)
    inh = eig.inherited & keep
    P = eig.right[:, inh] @ eig.left[inh]
    if np.abs(P.imag).max() > 1e-9:
        raise InternalInvariantViolation("inherited projector has an imaginary part")
    F = np.eye(eig.q.shape[0]) - eig.q + m * P.real
    if reduction is None:
        return F
    return reduction.c_hat.T @ F @ reduction.b_hat


def compute_sigma(eig: EigenData, G: np.ndarray, out_mask=None) -> np.ndarray:
    """CLT covariance as a spectral sum over residual eigenpairs.

    Sigma = sum_{i,k in R} v_i (u_i' G u_k) v_k' / (1 - lam_i - lam_k), the
    closed form of the m -> infinity limit of the drift-exponential integral:
    every term carrying an inherited eigenvalue has a denominator growing
    with m, and the inherited directions are annihilated by G for balanced
    models, so only residual pairs survive. Requires every residual real part
    below one half (RegimeMismatch otherwise).
    """
    mask = ~eig.inherited
    if out_mask is not None:
        mask &= ~np.asarray(out_mask, bool)
    n = eig.q.shape[0]
    if not mask.any():
        return np.zeros((n, n))
    lam = eig.values[mask]
    if lam.real.max() >= 0.5 - REGIME_BAND:
        raise RegimeMismatch(
            f"residual eigenvalue {lam[np.argmax(lam.real)]} has real part >= 1/2; "
            "no sqrt(n) CLT covariance exists"
        )
    V = eig.right[:, mask]
    L = eig.left[mask]
    coef = L @ G @ L.T
    denom = 1.0 - lam[:, None] - lam[None, :]
    S = V @ (coef / denom) @ V.T
    if np.abs(S.imag).max() > 1e-9 * max(1.0, np.abs(S.real).max()):
        raise InternalInvariantViolation("covariance has a nonvanishing imaginary part")
    S = (S.real + S.real.T) / 2.0
    evals = np.linalg.eigvalsh(S)
    if evals.min() < -1e-9 * max(1.0, evals.max()):
        raise InternalInvariantViolation(f"covariance not PSD: min eigenvalue {evals.min():.3g}")
    return S


# ---------------------------------------------------------------------------
# Whole-system analysis


@dataclass(eq=False)
class SubsystemReport:
    """Asymptotic summary for one leading or following subsystem."""

    label: str
    urns: tuple[int, ...]
    is_leader: bool
    q: np.ndarray
    eigen: EigenData
    z_inf: np.ndarray  # (s, K)
    lambda_star: complex | None
    regime: str
    exponent: float
    boundary: bool
    empty_residual: bool
    rate: str
    a_out: tuple
    sigma: np.ndarray | None
    g_blocks: tuple[np.ndarray, ...]
    joint_eigen: EigenData | None = None
    joint_urns: tuple[int, ...] | None = None
    reduction: ReducedSystem | None = None
    z_hat_inf: np.ndarray | None = None


@dataclass(eq=False)
class AsymptoticReport:
    system: ValidatedSystem
    partition: PartitionResult
    subsystems: tuple[SubsystemReport, ...]
    z_inf: np.ndarray  # (N, K), original urn order

    def subsystem_of(self, urn: int) -> SubsystemReport:
        for sub in self.subsystems:
            if urn in sub.urns:
                return sub
        raise KeyError(urn)

    def to_dict(self) -> dict:
        part = self.partition
        w_lambda_max = []
        for comp in part.classes:
            Wb = self.system.W[np.ix_(list(comp), list(comp))]
            w_lambda_max.append(float(np.abs(np.linalg.eigvals(Wb)).max()))
        subs = []
        for sub in self.subsystems:
            entry = {
                "label": sub.label,
                "urns": list(sub.urns),
                "leader": sub.is_leader,
                "Z_inf": sub.z_inf.tolist(),
                "lambda_star": None
                if sub.lambda_star is None
                else {"re": sub.lambda_star.real, "im": sub.lambda_star.imag},
                "regime": sub.regime,
                "exponent": sub.exponent,
                "boundary": sub.boundary,
                "rate": sub.rate,
                "A_out": [{"re": v.real, "im": v.imag} for v in sub.a_out],
                "Sigma": None if sub.sigma is None else sub.sigma.reshape(-1).tolist(),
                "Sigma_dim": None if sub.sigma is None else sub.sigma.shape[0],
                "G": [g.reshape(-1).tolist() for g in sub.g_blocks],
                "spectrum": [{"re": v.real, "im": v.imag} for v in sub.eigen.values],
            }
            subs.append(entry)
        return {
            "partition": {
                "classes": [list(c) for c in part.classes],
                "labels": list(part.labels),
                "is_leader": list(part.is_leader),
                "permutation": list(part.permutation),
                "lambda_max_W": w_lambda_max,
            },
            "subsystems": subs,
        }


def analyze(system: ValidatedSystem) -> AsymptoticReport:
    """Full pipeline: partition, limits, rate regimes, covariances."""
    part = partition_system(system.W)
    K = system.K

    # First pass: limits, class by class (followers read upstream limits).
    own_eigs: list[EigenData] = []
    own_qs: list[np.ndarray] = []
    z_by_class: list[np.ndarray] = []
    for ci, comp in enumerate(part.classes):
        urns = list(comp)
        Q_own = build_q_block(system, urns)
        Wb = system.W[np.ix_(urns, urns)]
        eig = eigen_decompose(Q_own, Wb, K)
        own_qs.append(Q_own)
        own_eigs.append(eig)
        if part.is_leader[ci]:
            z = leader_limit(eig)
        else:
            up_urns = [j for c in part.classes[:ci] for j in c]
            Q_cross = build_q_cross(system, urns, up_urns)
            z_up = np.concatenate([z_by_class[b] for b in range(ci)])
            z = follower_limit(Q_own, Q_cross, z_up)
            s = z.reshape(len(urns), K).sum(axis=1)
            if np.abs(s - 1.0).max() > 1e-9:
                raise InternalInvariantViolation(
                    f"follower limit blocks do not sum to 1: {s}"
                )
        z_by_class.append(z)

    z_all = np.zeros((system.N, K))
    for ci, comp in enumerate(part.classes):
        z_all[list(comp)] = z_by_class[ci].reshape(len(comp), K)

    resid = np.abs(z_all - np.array([system.urns[j].H @ (system.W @ z_all)[j] for j in range(system.N)]))
    if resid.max() > 1e-9:
        raise InternalInvariantViolation(
            f"fixed-point residual {resid.max():.3g} exceeds 1e-9"
        )

    g_all = compute_g(system, z_all)

    # Second pass: rates and covariances.
    subsystems = []
    for ci, comp in enumerate(part.classes):
        urns = list(comp)
        eig = own_eigs[ci]
        g_blocks = tuple(g_all[j] for j in urns)
        if part.is_leader[ci]:
            lam, regime, exponent, boundary, empty = lambda_star(eig.values, eig.inherited)
            sigma = None
            if regime == REGIME_SQRT_N:
                sigma = compute_sigma(eig, block_diag(list(g_blocks)))
            subsystems.append(
                SubsystemReport(
                    label=part.labels[ci],
                    urns=comp,
                    is_leader=True,
                    q=own_qs[ci],
                    eigen=eig,
                    z_inf=z_by_class[ci].reshape(len(urns), K),
                    lambda_star=lam,
                    regime=regime,
                    exponent=exponent,
                    boundary=boundary,
                    empty_residual=empty,
                    rate=rate_string(regime, exponent),
                    a_out=(),
                    sigma=sigma,
                    g_blocks=g_blocks,
                )
            )
        else:
            joint_urns = part.joint_urns(ci)
            up_urns = [j for j in joint_urns if j not in comp]
            Q_joint, jeig = joint_eigen(system, part, ci)
            Q_cross = build_q_cross(system, urns, up_urns)
            a_out, out_mask = compute_a_out(jeig, Q_cross, own_block=ci)
            lam, regime, exponent, boundary, empty = lambda_star(
                jeig.values, jeig.inherited, out_mask
            )
            reduction = reduce_follower(jeig, out_mask, own_dim=len(urns) * K, a_out=a_out)
            sigma = None
            z_hat = None
            if regime == REGIME_SQRT_N:
                G_joint = block_diag([g_all[j] for j in joint_urns])
                sigma_full = compute_sigma(jeig, G_joint, out_mask)
                sigma = reduction.c_hat.T @ sigma_full @ reduction.c_hat
                z_joint = np.concatenate([z_all[j] for j in joint_urns])
                z_hat = reduction.c_hat.T @ z_joint
            subsystems.append(
                SubsystemReport(
                    label=part.labels[ci],
                    urns=comp,
                    is_leader=False,
                    q=own_qs[ci],
                    eigen=eig,
                    z_inf=z_by_class[ci].reshape(len(urns), K),
                    lambda_star=lam,
                    regime=regime,
                    exponent=exponent,
                    boundary=boundary,
                    empty_residual=empty,
                    rate=rate_string(regime, exponent),
                    a_out=tuple(a_out),
                    sigma=sigma,
                    g_blocks=g_blocks,
                    joint_eigen=jeig,
                    joint_urns=joint_urns,
                    reduction=reduction,
                    z_hat_inf=z_hat,
                )
            )

    return AsymptoticReport(
        system=system, partition=part, subsystems=tuple(subsystems), z_inf=z_all
    )
