"""Expression classifiers: neuro-fuzzy intensity trees, pairwise RBF
SVMs trained with SMO, and the two-stage fusion of both feature streams.

A neuro-fuzzy tree is a binary tree whose internal nodes carry a sigmoid
membership over one feature (high side routes left) and whose leaves
carry one intensity value per expression in [0, 1]; a sample's output is
the firing-strength-weighted average of the leaf values.  Two such trees
(one per feature stream) feed their 12 intensities to a one-vs-one SVM.

Everything here is deterministic: tree growth uses weighted medians with
fixed tie rules, gradient tuning is full-batch with backtracking, and
the SMO working-pair choice never randomizes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .matrixkit import DimensionMismatchError


class ClassifierError(ValueError):
    """Base class for classifier training and inference failures."""


class DegenerateTargetsError(ClassifierError):
    """Every training target is identical; there is nothing to fit."""


class SolverStalledError(ClassifierError):
    """SMO stopped making progress before reaching the KKT tolerance."""


class ModelFormatError(ClassifierError):
    """Serialized model bytes are malformed or mislabeled."""


N_EXPRESSIONS = 6


@dataclass(frozen=True)
class TreeOptions:
    depth: int = 3
    epochs: int = 60
    lr: float = 0.25

    def __post_init__(self):
        if self.depth < 0:
            raise ClassifierError(f"depth={self.depth} must be >= 0")
        if self.epochs < 0:
            raise ClassifierError(f"epochs={self.epochs} must be >= 0")
        if not self.lr > 0:
            raise ClassifierError(f"lr={self.lr} must be positive")


_MIN_SLOPE = 1e-6


@dataclass
class NeuroFuzzyTree:
    """Preorder node arrays: feature[i] is -1 at leaves, child indices
    are -1 at leaves, leaf_values rows are meaningful only at leaves.
    The high side of each sigmoid membership routes to the left child.
    """

    input_dim: int
    n_outputs: int
    feature: np.ndarray
    center: np.ndarray
    slope: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_values: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0


def _as_samples(x, dim, what):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionMismatchError(
            f"{what}: expected {dim} features, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ClassifierError(f"{what}: non-finite values")
    return x, single


def _memberships(tree: NeuroFuzzyTree, x: np.ndarray) -> np.ndarray:
    """Sigmoid membership per internal node, (n_samples, n_nodes)."""
    mus = np.zeros((x.shape[0], tree.n_nodes))
    internal = ~tree.is_leaf
    idx = np.flatnonzero(internal)
    if idx.size:
        z = tree.slope[idx] * (x[:, tree.feature[idx]] - tree.center[idx])
        mus[:, idx] = expit(z)
    return mus


def _firing(tree: NeuroFuzzyTree, mus: np.ndarray) -> np.ndarray:
    """Leaf firing strengths; parents precede children in preorder, so a
    single forward pass over node indices settles every strength."""
    fire = np.zeros_like(mus)
    fire[:, 0] = 1.0
    for i in range(tree.n_nodes):
        if tree.feature[i] >= 0:
            fire[:, tree.left[i]] = fire[:, i] * mus[:, i]
            fire[:, tree.right[i]] = fire[:, i] * (1.0 - mus[:, i])
    return fire


def nf_predict(tree: NeuroFuzzyTree, x):
    """Fuzzy inference: firing-strength-weighted average of leaf values.

    Leaf strengths form a partition of unity and leaves live in [0, 1],
    so every output lands in [0, 1].
    """
    xs, single = _as_samples(x, tree.input_dim, "nf_predict input")
    fire = _firing(tree, _memberships(tree, xs))
    leaves = tree.is_leaf
    out = fire[:, leaves] @ tree.leaf_values[leaves]
    return out[0] if single else out


def nf_loss_and_gradient(tree: NeuroFuzzyTree, x, targets):
    """Mean squared intensity error and its exact gradient.

    Returns (loss, d_center, d_slope, d_leaf_values); gradient arrays
    align with the tree's node arrays (zeros at non-applicable nodes).
    The subtree value recursion S = mu*S_left + (1-mu)*S_right gives
    dS/dmu = S_left - S_right, and the sigmoid contributes
    dmu/dc = -s*mu*(1-mu), dmu/ds = (x_f - c)*mu*(1-mu).
    """
    xs, _ = _as_samples(x, tree.input_dim, "nf loss input")
    t = np.asarray(targets, dtype=float)
    if t.shape != (xs.shape[0], tree.n_outputs):
        raise DimensionMismatchError(
            f"targets shape {t.shape} does not match "
            f"({xs.shape[0]}, {tree.n_outputs})"
        )
    n, k = xs.shape[0], tree.n_outputs
    mus = _memberships(tree, xs)

    # subtree values bottom-up: children sit after parents in preorder
    s_val = np.zeros((n, tree.n_nodes, k))
    for i in range(tree.n_nodes - 1, -1, -1):
        if tree.feature[i] < 0:
            s_val[:, i] = tree.leaf_values[i]
        else:
            mu = mus[:, i, None]
            s_val[:, i] = mu * s_val[:, tree.left[i]] \
                + (1.0 - mu) * s_val[:, tree.right[i]]

    resid = s_val[:, 0] - t
    loss = float(np.mean(resid ** 2))

    adj = np.zeros((n, tree.n_nodes, k))
    adj[:, 0] = 2.0 * resid / (n * k)
    d_center = np.zeros(tree.n_nodes)
    d_slope = np.zeros(tree.n_nodes)
    d_leaf = np.zeros((tree.n_nodes, k))
    for i in range(tree.n_nodes):
        if tree.feature[i] < 0:
            d_leaf[i] = adj[:, i].sum(axis=0)
            continue
        mu = mus[:, i]
        a_mu = np.einsum(
            "nk,nk->n", adj[:, i],
            s_val[:, tree.left[i]] - s_val[:, tree.right[i]])
        bell = mu * (1.0 - mu)
        xf = xs[:, tree.feature[i]]
        d_center[i] = np.dot(a_mu, -tree.slope[i] * bell)
        d_slope[i] = np.dot(a_mu, (xf - tree.center[i]) * bell)
        adj[:, tree.left[i]] = adj[:, i] * mu[:, None]
        adj[:, tree.right[i]] = adj[:, i] * (1.0 - mu[:, None])
    return loss, d_center, d_slope, d_leaf


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(weights[order])
    pos = int(np.searchsorted(cw, 0.5 * cw[-1]))
    return float(values[order[min(pos, len(order) - 1)]])


def _entropy(weights: np.ndarray, labels: np.ndarray) -> float:
    total = weights.sum()
    if total <= 0:
        return 0.0
    h = 0.0
    for c in np.unique(labels):
        p = weights[labels == c].sum() / total
        if p > 0:
            h -= p * np.log(p)
    return h


def _grow(x, targets, labels, weights, depth_left, nodes):
    """Append this subtree's nodes (preorder) and return its root index."""
    wsum = weights.sum()
    parent_h = _entropy(weights, labels)
    best_gain, best_f, best_c = 0.0, -1, 0.0
    if depth_left > 0 and wsum > 1e-9 and parent_h > 1e-12:
        for f in range(x.shape[1]):
            c = _weighted_median(x[:, f], weights)
            mu = expit(x[:, f] - c)
            wl, wr = weights * mu, weights * (1.0 - mu)
            child = (wl.sum() * _entropy(wl, labels)
                     + wr.sum() * _entropy(wr, labels)) / wsum
            gain = parent_h - child
            if gain > best_gain + 1e-12:  # strict: ties keep lowest feature
                best_gain, best_f, best_c = gain, f, c
    idx = len(nodes)
    if best_f < 0:
        if wsum > 1e-12:
            leaf = np.clip(weights @ targets / wsum, 0.0, 1.0)
        else:
            leaf = np.clip(targets.mean(axis=0), 0.0, 1.0)
        nodes.append([-1, 0.0, 1.0, -1, -1, leaf])
        return idx
    nodes.append([best_f, best_c, 1.0, -1, -1,
                  np.zeros(targets.shape[1])])
    mu = expit(x[:, best_f] - best_c)
    nodes[idx][3] = _grow(x, targets, labels, weights * mu,
                          depth_left - 1, nodes)
    nodes[idx][4] = _grow(x, targets, labels, weights * (1.0 - mu),
                          depth_left - 1, nodes)
    return idx


def _project(tree: NeuroFuzzyTree) -> None:
    np.maximum(tree.slope, _MIN_SLOPE, out=tree.slope)
    np.clip(tree.leaf_values, 0.0, 1.0, out=tree.leaf_values)


def train_nf_tree(x, targets, opts: TreeOptions | None = None) -> NeuroFuzzyTree:
    """Grow a tree by fuzzy information gain, then tune it by projected
    gradient descent on the mean squared intensity error.

    Growth: each split takes the feature with the largest fuzzy gain
    (ties fall to the lowest index), centered at the weighted median,
    slope 1.  Tuning: full-batch steps with per-epoch backtracking; a
    step counts only if the post-projection loss does not increase, and
    tuning stops once no backtracked step is accepted.
    """
    if opts is None:
        opts = TreeOptions()
    x = np.asarray(x, dtype=float)
    t = np.asarray(targets, dtype=float)
    if x.ndim != 2 or t.ndim != 2 or x.shape[0] != t.shape[0]:
        raise DimensionMismatchError(
            f"features {x.shape} and targets {t.shape} do not align"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise ClassifierError("non-finite training data")
    if t.min() < 0.0 or t.max() > 1.0:
        raise ClassifierError("intensity targets must lie in [0, 1]")
    if np.ptp(t, axis=0).max() == 0.0:
        raise DegenerateTargetsError("all intensity targets are identical")

    labels = np.argmax(t, axis=1)
    nodes = []
    _grow(x, t, labels, np.ones(x.shape[0]), opts.depth, nodes)
    tree = NeuroFuzzyTree(
        input_dim=x.shape[1],
        n_outputs=t.shape[1],
        feature=np.array([n[0] for n in nodes], dtype=np.int32),
        center=np.array([n[1] for n in nodes]),
        slope=np.array([n[2] for n in nodes]),
        left=np.array([n[3] for n in nodes], dtype=np.int32),
        right=np.array([n[4] for n in nodes], dtype=np.int32),
        leaf_values=np.stack([n[5] for n in nodes]),
    )

    for _ in range(opts.epochs):
        loss, dc, ds, dl = nf_loss_and_gradient(tree, x, t)
        step = opts.lr
        accepted = False
        for _ in range(30):
            cand = NeuroFuzzyTree(
                tree.input_dim, tree.n_outputs, tree.feature,
                tree.center - step * dc, tree.slope - step * ds,
                tree.left, tree.right, tree.leaf_values - step * dl)
            _project(cand)
            if nf_loss_and_gradient(cand, x, t)[0] <= loss + 1e-12:
                tree = cand
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return tree


# ---------------------------------------------------------------------------
# pairwise SVM


@dataclass
class PairSvm:
    """One-vs-one binary machine: class a is the +1 side."""

    a: int
    b: int
    support_vectors: np.ndarray
    coef: np.ndarray  # alpha_i * y_i over support vectors
    bias: float


@dataclass
class SvmModel:
    input_dim: int
    classes: tuple
    gamma: float
    c: float
    pairs: list
    objective_trace: dict | None = None


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None]
          - 2.0 * (a @ b.T))
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _dual_objective(alpha, y, k):
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ k @ ay)


def _smo(k, y, c, tol, trace):
    """Deterministic sequential minimal optimization on one kernel matrix.

    Second-choice heuristic: largest |E1 - E2| over non-bound samples,
    ties to the lowest index; fallbacks scan non-bound then all samples
    in ascending order (no randomized starting points).
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    bias = 0.0
    err = -y.astype(float)  # decision - y at alpha = 0, bias = 0
    eps = 1e-12

    def take_step(i1, i2):
        nonlocal bias
        if i1 == i2:
            return False
        a1, a2 = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = err[i1], err[i2]
        s = y1 * y2
        if s < 0:
            lo, hi = max(0.0, a2 - a1), min(c, c + a2 - a1)
        else:
            lo, hi = max(0.0, a1 + a2 - c), min(c, a1 + a2)
        if lo >= hi:
            return False
        k11, k12, k22 = k[i1, i1], k[i1, i2], k[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2new = a2 + y2 * (e1 - e2) / eta
            a2new = min(max(a2new, lo), hi)
        else:
            # flat direction (duplicate points): objective is linear in
            # a2, pick the better endpoint
            f1 = y1 * e1 - a1 * k11 - s * a2 * k12
            f2 = y2 * e2 - a2 * k22 - s * a1 * k12
            l1 = a1 + s * (a2 - lo)
            h1 = a1 + s * (a2 - hi)
            lobj = (l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11
                    + 0.5 * lo * lo * k22 + s * lo * l1 * k12)
            hobj = (h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11
                    + 0.5 * hi * hi * k22 + s * hi * h1 * k12)
            if lobj < hobj - eps:
                a2new = lo
            elif lobj > hobj + eps:
                a2new = hi
            else:
                return False
        if abs(a2new - a2) < eps * (a2new + a2 + eps):
            return False
        a1new = a1 + s * (a2 - a2new)
        b1 = bias - e1 - y1 * (a1new - a1) * k11 - y2 * (a2new - a2) * k12
        b2 = bias - e2 - y1 * (a1new - a1) * k12 - y2 * (a2new - a2) * k22
        if 0.0 < a1new < c:
            bnew = b1
        elif 0.0 < a2new < c:
            bnew = b2
        else:
            bnew = 0.5 * (b1 + b2)
        err[:] += (y1 * (a1new - a1) * k[i1]
                   + y2 * (a2new - a2) * k[i2] + (bnew - bias))
        alpha[i1], alpha[i2] = a1new, a2new
        bias = bnew
        if trace is not None:
            trace.append(_dual_objective(alpha, y, k))
        return True

    def examine(i2):
        r2 = err[i2] * y[i2]
        if not ((r2 < -tol and alpha[i2] < c) or (r2 > tol and alpha[i2] > 0)):
            return False
        nb = np.flatnonzero((alpha > 0) & (alpha < c))
        if nb.size > 1:
            i1 = int(nb[np.argmax(np.abs(err[nb] - err[i2]))])
            if take_step(i1, i2):
                return True
        for i1 in nb:
            if take_step(int(i1), i2):
                return True
        for i1 in range(n):
            if take_step(i1, i2):
                return True
        return False

    examine_all = True
    guard = 0
    guard_max = 1000 + 200 * n
    while True:
        changed = 0
        targets = range(n) if examine_all \
            else np.flatnonzero((alpha > 0) & (alpha < c))
        for i2 in targets:
            changed += examine(int(i2))
            guard += 1
            if guard > guard_max:
                raise SolverStalledError(
                    f"no KKT convergence after {guard} examinations"
                )
        if examine_all:
            if changed == 0:
                break
            examine_all = False
        elif changed == 0:
            examine_all = True
    return alpha, bias


def train_svm_rbf(x, y, c: float = 10.0, gamma: float | None = None,
                  tol: float = 1e-3, trace_objective: bool = False) -> SvmModel:
    """One-vs-one RBF machines, one deterministic SMO run per class pair.

    gamma defaults to 1 / input dimension.  With trace_objective the
    per-pair dual objective after every accepted update is kept on the
    model (it must be non-decreasing; tests assert that).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatchError(f"X must be 2-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ClassifierError("non-finite features")
    y = np.asarray(y, dtype=int)
    if y.shape != (x.shape[0],):
        raise DimensionMismatchError(
            f"labels shape {y.shape} does not match {x.shape[0]} samples"
        )
    classes = tuple(int(v) for v in np.unique(y))
    if len(classes) < 2:
        raise ClassifierError("need at least two classes")
    if not c > 0:
        raise ClassifierError(f"C={c} must be positive")
    if gamma is None:
        gamma = 1.0 / x.shape[1]
    if not gamma > 0:
        raise ClassifierError(f"gamma={gamma} must be positive")

    pairs = []
    traces = {} if trace_objective else None
    for ai in range(len(classes)):
        for bi in range(ai + 1, len(classes)):
            a, b = classes[ai], classes[bi]
            idx = np.flatnonzero((y == a) | (y == b))
            ysub = np.where(y[idx] == a, 1.0, -1.0)
            xsub = x[idx]
            kmat = rbf_kernel(xsub, xsub, gamma)
            trace = [] if trace_objective else None
            alpha, bias = _smo(kmat, ysub, c, tol, trace)
            sv = alpha > 0
            pairs.append(PairSvm(a, b, np.ascontiguousarray(xsub[sv]),
                                 alpha[sv] * ysub[sv], float(bias)))
            if trace_objective:
                traces[(a, b)] = trace
    return SvmModel(input_dim=x.shape[1], classes=classes, gamma=float(gamma),
                    c=float(c), pairs=pairs, objective_trace=traces)


def pair_decisions(model: SvmModel, x) -> np.ndarray:
    """Raw pairwise decision values, shape (n_pairs, n_samples)."""
    xs, _ = _as_samples(x, model.input_dim, "svm input")
    out = np.empty((len(model.pairs), xs.shape[0]))
    for j, pair in enumerate(model.pairs):
        kx = rbf_kernel(xs, pair.support_vectors, model.gamma)
        out[j] = kx @ pair.coef + pair.bias
    return out


def svm_predict(model: SvmModel, x):
    """Majority vote over pairwise decisions; a decision of exactly zero
    votes for the pair's lower class, and vote ties also fall to the
    lowest class index."""
    xs, single = _as_samples(x, model.input_dim, "svm input")
    dec = pair_decisions(model, xs)
    votes = np.zeros((xs.shape[0], len(model.classes)), dtype=np.int64)
    pos = {cls: i for i, cls in enumerate(model.classes)}
    for j, pair in enumerate(model.pairs):
        win_a = dec[j] >= 0.0
        votes[win_a, pos[pair.a]] += 1
        votes[~win_a, pos[pair.b]] += 1
    labels = np.array([model.classes[i] for i in np.argmax(votes, axis=1)])
    return int(labels[0]) if single else labels


# ---------------------------------------------------------------------------
# fusion


@dataclass
class FusionModel:
    tree_geo: NeuroFuzzyTree
    tree_app: NeuroFuzzyTree
    svm: SvmModel

    def __post_init__(self):
        want = self.tree_geo.n_outputs + self.tree_app.n_outputs
        if self.svm.input_dim != want:
            raise ClassifierError(
                f"svm expects {self.svm.input_dim} inputs, trees emit {want}"
            )


def intensity_targets(labels, fractions, n_outputs: int = N_EXPRESSIONS):
    """One-hot rows scaled by each sequence's intensity fraction."""
    labels = np.asarray(labels, dtype=int)
    fr = np.asarray(fractions, dtype=float)
    if fr.shape != labels.shape:
        raise DimensionMismatchError("labels and fractions do not align")
    if fr.min() <= 0.0 or fr.max() > 1.0:
        raise ClassifierError("intensity fractions must lie in (0, 1]")
    if labels.min() < 1 or labels.max() > n_outputs:
        raise ClassifierError(f"labels must lie in 1..{n_outputs}")
    t = np.zeros((labels.shape[0], n_outputs))
    t[np.arange(labels.shape[0]), labels - 1] = fr
    return t


def train_fusion(geo_features, app_features, labels, fractions,
                 tree_opts: TreeOptions | None = None, c: float = 10.0,
                 gamma: float | None = None, tol: float = 1e-3) -> FusionModel:
    """Stage one trains an intensity tree per feature stream; stage two
    trains the SVM on the concatenated 12 tree outputs."""
    geo = np.asarray(geo_features, dtype=float)
    app = np.asarray(app_features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if geo.ndim != 2 or app.ndim != 2 \
            or not (geo.shape[0] == app.shape[0] == labels.shape[0]):
        raise DimensionMismatchError("feature streams and labels do not align")
    targets = intensity_targets(labels, fractions)
    tree_geo = train_nf_tree(geo, targets, tree_opts)
    tree_app = train_nf_tree(app, targets, tree_opts)
    z = np.hstack([nf_predict(tree_geo, geo), nf_predict(tree_app, app)])
    if gamma is None:
        gamma = 1.0 / z.shape[1]
    svm = train_svm_rbf(z, labels, c=c, gamma=gamma, tol=tol)
    return FusionModel(tree_geo, tree_app, svm)


def fusion_intensities(model: FusionModel, geo, app) -> np.ndarray:
    g, single_g = _as_samples(geo, model.tree_geo.input_dim, "geo features")
    a, single_a = _as_samples(app, model.tree_app.input_dim, "app features")
    if g.shape[0] != a.shape[0]:
        raise DimensionMismatchError("geo/app sample counts differ")
    z = np.hstack([nf_predict(model.tree_geo, g), nf_predict(model.tree_app, a)])
    return z[0] if (single_g and single_a) else z


def predict_fusion(model: FusionModel, geo, app):
    """Returns (label, intensities) for one sample, (labels, intensity
    matrix) for a batch."""
    z = fusion_intensities(model, geo, app)
    return svm_predict(model.svm, z), z


# ---------------------------------------------------------------------------
# serialization

FUSION_MAGIC = b"FUSE"
SVM_MAGIC = b"SVM1"
_FORMAT_VERSION = 1


def _tree_payload(tree: NeuroFuzzyTree) -> bytes:
    parts = [struct.pack("<III", tree.input_dim, tree.n_outputs, tree.n_nodes)]
    for i in range(tree.n_nodes):
        if tree.feature[i] < 0:
            parts.append(struct.pack("<B", 1))
            parts.append(tree.leaf_values[i].astype("<f8").tobytes())
        else:
            parts.append(struct.pack("<BIdd", 0, int(tree.feature[i]),
                                     float(tree.center[i]),
                                     float(tree.slope[i])))
    return b"".join(parts)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise ModelFormatError("truncated model data")
        vals = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return vals

    def take_f64(self, count: int) -> np.ndarray:
        size = 8 * count
        if self.pos + size > len(self.buf):
            raise ModelFormatError("truncated model data")
        arr = np.frombuffer(self.buf, dtype="<f8", count=count,
                            offset=self.pos).copy()
        self.pos += size
        return arr

    def done(self):
        if self.pos != len(self.buf):
            raise ModelFormatError("trailing bytes after model payload")


def _parse_tree(payload: bytes) -> NeuroFuzzyTree:
    cur = _Cursor(payload)
    input_dim, n_outputs, n_nodes = cur.take("<III")
    if n_nodes < 1:
        raise ModelFormatError("tree has no nodes")
    feature = np.full(n_nodes, -1, dtype=np.int32)
    center = np.zeros(n_nodes)
    slope = np.ones(n_nodes)
    left = np.full(n_nodes, -1, dtype=np.int32)
    right = np.full(n_nodes, -1, dtype=np.int32)
    leaf_values = np.zeros((n_nodes, n_outputs))
    next_idx = 0

    def read_node():
        nonlocal next_idx
        if next_idx >= n_nodes:
            raise ModelFormatError("tree payload describes too many nodes")
        i = next_idx
        next_idx += 1
        (tag,) = cur.take("<B")
        if tag == 1:
            leaf_values[i] = cur.take_f64(n_outputs)
        elif tag == 0:
            f, ctr, slp = cur.take("<Idd")
            if f >= input_dim:
                raise ModelFormatError(f"node feature {f} out of range")
            feature[i] = f
            center[i] = ctr
            slope[i] = slp
            left[i] = read_node()
            right[i] = read_node()
        else:
            raise ModelFormatError(f"unknown node tag {tag}")
        return i

    read_node()
    if next_idx != n_nodes:
        raise ModelFormatError("tree payload node count mismatch")
    cur.done()
    return NeuroFuzzyTree(int(input_dim), int(n_outputs), feature, center,
                          slope, left, right, leaf_values)


def _svm_payload(model: SvmModel) -> bytes:
    parts = [struct.pack("<II", model.input_dim, len(model.classes)),
             struct.pack("<dd", model.gamma, model.c),
             struct.pack("<I", len(model.pairs))]
    for pair in model.pairs:
        n_sv = pair.coef.shape[0]
        parts.append(struct.pack("<III", pair.a, pair.b, n_sv))
        parts.append(struct.pack("<d", pair.bias))
        parts.append(pair.coef.astype("<f8").tobytes())
        parts.append(pair.support_vectors.astype("<f8").tobytes())
    return b"".join(parts)


def _parse_svm(payload: bytes) -> SvmModel:
    cur = _Cursor(payload)
    input_dim, n_classes = cur.take("<II")
    gamma, c = cur.take("<dd")
    (n_pairs,) = cur.take("<I")
    pairs = []
    seen = set()
    for _ in range(n_pairs):
        a, b, n_sv = cur.take("<III")
        (bias,) = cur.take("<d")
        coef = cur.take_f64(n_sv)
        sv = cur.take_f64(n_sv * input_dim).reshape(n_sv, input_dim)
        pairs.append(PairSvm(int(a), int(b), sv, coef, float(bias)))
        seen.update((int(a), int(b)))
    cur.done()
    if n_pairs and len(seen) != n_classes:
        raise ModelFormatError(
            f"pairs name {len(seen)} classes, header says {n_classes}"
        )
    return SvmModel(int(input_dim), tuple(sorted(seen)), float(gamma),
                    float(c), pairs)


def write_svm(path, model: SvmModel) -> None:
    with open(path, "wb") as fh:
        fh.write(SVM_MAGIC)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        fh.write(_svm_payload(model))


def read_svm(path) -> SvmModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != SVM_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    return _parse_svm(data[8:])


def write_fusion(path, model: FusionModel) -> None:
    sections = [_tree_payload(model.tree_geo), _tree_payload(model.tree_app),
                _svm_payload(model.svm)]
    with open(path, "wb") as fh:
        fh.write(FUSION_MAGIC)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        for sec in sections:
            fh.write(struct.pack("<Q", len(sec)))
            fh.write(sec)


def read_fusion(path) -> FusionModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != FUSION_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    pos = 8
    sections = []
    for _ in range(3):
        if pos + 8 > len(data):
            raise ModelFormatError(f"{path}: truncated section table")
        (length,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        if pos + length > len(data):
            raise ModelFormatError(f"{path}: truncated section")
        sections.append(data[pos:pos + length])
        pos += length
    if pos != len(data):
        raise ModelFormatError(f"{path}: trailing bytes")
    return FusionModel(_parse_tree(sections[0]), _parse_tree(sections[1]),
                       _parse_svm(sections[2]))
