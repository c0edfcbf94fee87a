"""Regularized generalized eigensolver and kernel-space projection.

The learned transformation maximizes the between-class scatter against the
sum of the invariance scatters and the within-class scatter,

    between @ B = (gamma * conditional + alpha * prior + within + eps I) B Lambda,

a symmetric-definite pencil: the right-hand matrix is positive definite
once the eps ridge is added, so the problem reduces via its Cholesky
factor to a standard symmetric eigenproblem (scipy.linalg.eigh does the
reduction and back-transform). Eigenvectors come back normalized so that
B' D B = I, matching the trace constraint of the underlying Lagrangian.

The configured eps is relative: the ridge actually added is
eps * mean(diag(within)), falling back to eps alone when the within
scatter has zero trace, so the same setting behaves comparably across
kernel scales. The effective value is stored on the model.

New samples are mapped by evaluating the kernel against the retained
training features, centering the cross kernel, and applying
B Lambda^{-1/2}; see project.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernel import CenteringStats, KernelError, KernelSpec, center_cross_from_stats, gram
from .scatter import ScatterSet


class SolverError(ValueError):
    """Invalid solver configuration or a failed eigensolve."""


_RESIDUAL_REL = 1e-6
_RESIDUAL_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Pencil weights and output dimension.

    q=None means "let the fitting layer pick its default",
    min(n - 1, classes * domains); the bare solver requires a concrete q.
    eig_tolerance is relative to the largest eigenvalue; smaller
    eigenvalues are discarded before the Lambda^{-1/2} scaling.
    """

    gamma: float = 1.0
    alpha: float = 1.0
    epsilon: float = 1e-5
    q: int | None = None
    eig_tolerance: float = 1e-10

    def __post_init__(self):
        if self.gamma < 0 or self.alpha < 0:
            raise SolverError("gamma and alpha must be >= 0")
        if not self.epsilon > 0:
            raise SolverError("epsilon must be > 0")
        if self.q is not None and self.q < 1:
            raise SolverError("q must be >= 1")
        if not self.eig_tolerance > 0:
            raise SolverError("eig_tolerance must be > 0")


def default_q(n: int, n_classes: int, n_domains: int) -> int:
    """Default output dimension: min(n - 1, classes * domains)."""
    return min(n - 1, n_classes * n_domains)


@dataclass(frozen=True)
class ProjectionModel:
    """Eigenvectors, eigenvalues and the training context for projection.

    coefficients holds one column per kept component (descending
    eigenvalue, each column sign-fixed so its largest-magnitude entry is
    positive, normalized so B' D B = I). kernel_spec, training_features
    and centering are present on models fitted from data and absent on
    bare eigensolver output.
    """

    coefficients: np.ndarray
    eigenvalues: np.ndarray
    gamma: float
    alpha: float
    effective_epsilon: float
    requested_q: int
    warnings: tuple[str, ...] = ()
    kernel_spec: KernelSpec | None = None
    training_features: np.ndarray | None = None
    centering: CenteringStats | None = None

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=np.float64)
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        if coef.ndim != 2 or lam.ndim != 1 or coef.shape[1] != lam.shape[0]:
            raise SolverError("coefficients and eigenvalues are inconsistent")
        if lam.size == 0:
            raise SolverError("model has no components")
        if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
            raise SolverError("eigenvalues must be positive and non-increasing")
        coef = coef.copy()
        coef.flags.writeable = False
        lam = lam.copy()
        lam.flags.writeable = False
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "eigenvalues", lam)
        if self.training_features is not None:
            tf = np.array(self.training_features, dtype=np.float64)
            tf.flags.writeable = False
            object.__setattr__(self, "training_features", tf)

    @property
    def n_components(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def n_train(self) -> int:
        return int(self.coefficients.shape[0])


def _canonical_signs(vecs: np.ndarray) -> np.ndarray:
    flip = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])] < 0
    out = vecs.copy()
    out[:, flip] *= -1.0
    return out


def solve(
    scatters: ScatterSet,
    config: SolverConfig,
    kernel_spec: KernelSpec | None = None,
    training_features: np.ndarray | None = None,
    centering: CenteringStats | None = None,
) -> ProjectionModel:
    """Top eigenpairs of the regularized scatter pencil.

    Returns up to config.q components; eigenvalues that are not strictly
    positive, or fall below eig_tolerance relative to the largest, are
    dropped with a recorded warning. The optional kernel context is
    attached verbatim so fitted models can project new samples.
    """
    P = scatters.between
    n = P.shape[0]
    if config.q is None:
        raise SolverError(
            "SolverConfig.q is unset; pass a concrete dimension "
            "(fitting layers default it to min(n - 1, classes * domains))"
        )
    if config.q > n:
        raise SolverError(f"q={config.q} exceeds the number of training samples n={n}")
    if not all(
        m.shape == (n, n) for m in (scatters.conditional, scatters.prior, scatters.within)
    ):
        raise SolverError("scatter matrices have inconsistent shapes")

    scale = float(np.mean(np.diag(scatters.within)))
    eff_eps = config.epsilon * (scale if scale > 0 else 1.0)
    D = (
        config.gamma * scatters.conditional
        + config.alpha * scatters.prior
        + scatters.within
        + eff_eps * np.eye(n)
    )
    try:
        lam, vecs = scipy.linalg.eigh(P, D)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"generalized eigensolve failed: {exc}") from None

    order = np.argsort(-lam, kind="stable")[: config.q]
    lam = lam[order]
    vecs = vecs[:, order]
    top = lam[0] if lam.size else 0.0
    if top <= 0:
        raise SolverError("no positive eigenvalues: the between-class scatter is zero")
    keep = (lam > 0) & (lam >= config.eig_tolerance * top)
    warnings: tuple[str, ...] = ()
    if keep.sum() < config.q:
        warnings = (
            f"requested q={config.q} but only {int(keep.sum())} eigenvalues "
            "are positive above tolerance; truncated",
        )
    lam = lam[keep]
    vecs = _canonical_signs(vecs[:, keep])

    # Residual screen. Eigenvalues just above the relative tolerance can
    # still be pure null-space noise of the (low-rank) numerator; such
    # pairs fail the residual bound and carry no signal, so the component
    # list is cut at the first failure rather than returned unreliable.
    PB = P @ vecs
    DB = D @ vecs
    res = np.linalg.norm(PB - DB * lam[None, :], axis=0)
    bound = _RESIDUAL_REL * np.maximum(np.linalg.norm(PB, axis=0), _RESIDUAL_FLOOR)
    bad = np.flatnonzero(res > bound)
    if bad.size:
        cut = int(bad[0])
        if cut == 0:
            raise SolverError(
                "leading eigenpair fails the residual bound "
                f"({res[0]:.3e} > {bound[0]:.3e}); inputs are likely degenerate"
            )
        warnings = warnings + (
            f"eigenpairs from index {cut} fail the residual bound and were dropped",
        )
        lam = lam[:cut]
        vecs = vecs[:, :cut]

    return ProjectionModel(
        coefficients=vecs,
        eigenvalues=lam,
        gamma=float(config.gamma),
        alpha=float(config.alpha),
        effective_epsilon=float(eff_eps),
        requested_q=int(config.q),
        warnings=warnings,
        kernel_spec=kernel_spec,
        training_features=training_features,
        centering=centering,
    )


def projection_basis(model: ProjectionModel) -> np.ndarray:
    """Coefficient columns scaled by eigenvalue^{-1/2}.

    A centered kernel column block Kc maps to features via Kc.T @ basis.
    """
    return model.coefficients / np.sqrt(model.eigenvalues)[None, :]


def project(model: ProjectionModel, new_features: np.ndarray, mode: str = "paper") -> np.ndarray:
    """Map new samples into the learned space.

    Evaluates the kernel between the retained training samples and
    new_features, centers the cross kernel per ``mode`` (see
    center_cross_from_stats), and applies the scaled coefficients.
    """
    if model.kernel_spec is None or model.training_features is None or model.centering is None:
        raise SolverError(
            "model carries no kernel context; fit it through the classify layer "
            "or pass kernel_spec/training_features/centering to solve"
        )
    x = np.asarray(new_features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.training_features.shape[1]:
        raise SolverError(
            f"new features must be 2-D with {model.training_features.shape[1]} columns, "
            f"got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise SolverError("new features contain non-finite values")
    Kt = gram(model.training_features, x, model.kernel_spec)
    Ktc = center_cross_from_stats(Kt, model.centering, mode)
    return Ktc.T @ projection_basis(model)


# ---------------------------------------------------------------------------
# model serialization: versioned little-endian flat file
# ---------------------------------------------------------------------------
#
# layout (all integers and floats little-endian):
#   magic            8 bytes  b"CINVPMDL"
#   version          u32      currently 1
#   family           u32      0 = rbf, 1 = linear
#   n                u64      training samples
#   d                u64      feature dimension
#   q                u64      kept components
#   requested_q      u64
#   bandwidth        f64
#   gamma            f64
#   alpha            f64
#   effective_eps    f64
#   grand_mean       f64      centering statistic
#   warning_count    u32
#   warnings         warning_count x (u32 length + utf-8 bytes)
#   eigenvalues      q x f64
#   coefficients     n*q x f64, row-major
#   training_feats   n*d x f64, row-major
#   row_means        n x f64   centering statistic
# ---------------------------------------------------------------------------

_MAGIC = b"CINVPMDL"
_VERSION = 1
_FAMILY_CODES = {"rbf": 0, "linear": 1}
_FAMILY_NAMES = {v: k for k, v in _FAMILY_CODES.items()}


def save_model(model: ProjectionModel, path) -> None:
    """Write a fitted model to the flat binary format documented above."""
    if model.kernel_spec is None or model.training_features is None or model.centering is None:
        raise SolverError("only models with kernel context can be saved")
    if not model.kernel_spec.resolved:
        raise SolverError("model kernel bandwidth is unresolved")
    n, d = model.training_features.shape
    q = model.n_components
    parts = [
        _MAGIC,
        struct.pack(
            "<IIQQQQddddd",
            _VERSION,
            _FAMILY_CODES[model.kernel_spec.family],
            n,
            d,
            q,
            model.requested_q,
            float(model.kernel_spec.bandwidth),
            model.gamma,
            model.alpha,
            model.effective_epsilon,
            model.centering.grand_mean,
        ),
        struct.pack("<I", len(model.warnings)),
    ]
    for w in model.warnings:
        blob = w.encode("utf-8")
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    for arr in (
        model.eigenvalues,
        model.coefficients,
        model.training_features,
        model.centering.row_means,
    ):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_model(path) -> ProjectionModel:
    """Read a model written by save_model."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise SolverError(f"model file not found: {path}") from None
    if blob[: len(_MAGIC)] != _MAGIC:
        raise SolverError(f"{path}: not a model file (bad magic)")
    off = len(_MAGIC)
    head = struct.Struct("<IIQQQQddddd")
    try:
        (version, family, n, d, q, req_q, bw, gamma, alpha, eff_eps, grand) = head.unpack_from(
            blob, off
        )
        off += head.size
        if version != _VERSION:
            raise SolverError(f"{path}: unsupported model version {version}")
        if family not in _FAMILY_NAMES:
            raise SolverError(f"{path}: unknown kernel family code {family}")
        (n_warn,) = struct.unpack_from("<I", blob, off)
        off += 4
        warnings = []
        for _ in range(n_warn):
            (length,) = struct.unpack_from("<I", blob, off)
            off += 4
            warnings.append(blob[off : off + length].decode("utf-8"))
            off += length

        def block(count):
            nonlocal off
            out = np.frombuffer(blob, dtype="<f8", count=count, offset=off).astype(np.float64)
            off += 8 * count
            return out

        lam = block(q)
        coef = block(n * q).reshape(n, q)
        feats = block(n * d).reshape(n, d)
        row_means = block(n)
    except (struct.error, ValueError) as exc:
        raise SolverError(f"{path}: truncated or corrupt model file ({exc})") from None
    if off != len(blob):
        raise SolverError(f"{path}: {len(blob) - off} unexpected trailing bytes")
    row_means.flags.writeable = False
    return ProjectionModel(
        coefficients=coef,
        eigenvalues=lam,
        gamma=gamma,
        alpha=alpha,
        effective_epsilon=eff_eps,
        requested_q=int(req_q),
        warnings=tuple(warnings),
        kernel_spec=KernelSpec(_FAMILY_NAMES[family], bw),
        training_features=feats,
        centering=CenteringStats(n=int(n), row_means=row_means, grand_mean=grand),
    )
