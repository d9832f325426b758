import numpy as np
import numpy.testing as npt
import pytest

from faceseq import geometric as geo
from faceseq import subspace as ss


def smooth_field(ys, xs):
    # band-limited analytic texture; sampling it at shifted coordinates
    # gives sub-pixel ground-truth motion without interpolation error
    return (40.0 * np.sin(0.31 * xs) * np.cos(0.23 * ys)
            + 30.0 * np.cos(0.17 * xs + 0.40 * ys)
            + 20.0 * np.sin(0.41 * ys - 0.12 * xs) + 120.0)


def render(shape, dx=0.0, dy=0.0):
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]].astype(float)
    return smooth_field(ys - dy, xs - dx)


def integer_grid(frame_size, start, step):
    # 113 integer-coordinate points so the tracker samples pure lattice
    # values (no interpolation) in the closed-form comparisons
    pts = []
    x = y = start
    while len(pts) < geo.GRID_POINT_COUNT:
        pts.append((float(x), float(y)))
        x += step
        if x > frame_size[1] - 1 - start:
            x = start
            y += step
    return geo.GridModel(np.array(pts), frame_size)


class TestGridModel:
    def test_point_count_enforced(self):
        with pytest.raises(geo.GridFormatError):
            geo.GridModel(np.zeros((112, 2)) + 5.0, (64, 64))

    def test_points_outside_frame_rejected(self):
        pts = np.full((113, 2), 10.0)
        pts[7] = (70.0, 10.0)
        with pytest.raises(geo.GridFormatError):
            geo.GridModel(pts, (64, 64))

    def test_margin_check(self):
        pts = np.full((113, 2), 10.0)
        pts[0] = (3.0, 30.0)
        grid = geo.GridModel(pts, (64, 64))
        grid.require_margin(3)
        with pytest.raises(geo.GridOutOfBoundsError):
            grid.require_margin(4)

    def test_oval_grid_count_and_margin(self):
        grid = geo.oval_grid((96, 80), margin=9.0)
        assert grid.points.shape == (113, 2)
        grid.require_margin(9)
        grid2 = geo.oval_grid((96, 80), margin=9.0)
        npt.assert_array_equal(grid.points, grid2.points)


class TestGridFileRoundTrip:
    def test_round_trip(self, tmp_path):
        grid = geo.oval_grid((64, 64), margin=8.0)
        path = tmp_path / "seq01.grid"
        geo.write_grid(path, grid)
        back = geo.read_grid(path, (64, 64))
        npt.assert_allclose(back.points, grid.points, atol=1e-8)

    def test_wrong_line_count(self, tmp_path):
        path = tmp_path / "bad.grid"
        path.write_text("1.0 2.0\n" * 100)
        with pytest.raises(geo.GridFormatError):
            geo.read_grid(path, (64, 64))

    def test_malformed_line(self, tmp_path):
        lines = ["10.0 10.0"] * 112 + ["10.0"]
        path = tmp_path / "bad.grid"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(geo.GridFormatError):
            geo.read_grid(path, (64, 64))


class TestTrackerValidation:
    def test_too_few_frames(self):
        frame = render((64, 64))
        grid = geo.oval_grid((64, 64), margin=8.0)
        with pytest.raises(geo.TooFewFramesError):
            geo.track_pyramidal_lk([frame], grid)

    def test_mismatched_frame_sizes(self):
        grid = geo.oval_grid((64, 64), margin=8.0)
        with pytest.raises(geo.FrameSizeMismatchError):
            geo.track_pyramidal_lk([render((64, 64)), render((64, 60))], grid)

    def test_grid_from_other_frame_size(self):
        grid = geo.oval_grid((96, 96), margin=8.0)
        with pytest.raises(geo.GridOutOfBoundsError):
            geo.track_pyramidal_lk([render((64, 64))] * 2, grid)

    def test_margin_violation(self):
        pts = np.full((113, 2), 20.0)
        pts[0] = (2.0, 20.0)
        grid = geo.GridModel(pts, (64, 64))
        with pytest.raises(geo.GridOutOfBoundsError):
            geo.track_pyramidal_lk([render((64, 64))] * 2, grid,
                                   geo.TrackerOptions(window=9))


class TestTrackerMotion:
    def test_static_sequence_exactly_zero(self):
        frame = render((96, 80))
        grid = geo.oval_grid((96, 80), margin=10.0)
        traj = geo.track_pyramidal_lk([frame] * 4, grid)
        assert not traj.lost_mask.any()
        for t in range(4):
            npt.assert_array_equal(traj.positions[t], grid.points)

    def test_global_translation_recovered(self):
        shape = (96, 96)
        frames = [render(shape), render(shape, dx=3.0, dy=-2.0)]
        grid = geo.oval_grid(shape, margin=14.0)
        traj = geo.track_pyramidal_lk(frames, grid)
        assert not traj.lost_mask.any()
        d = traj.positions[1] - traj.positions[0]
        err = np.hypot(d[:, 0] - 3.0, d[:, 1] + 2.0)
        assert np.mean(err < 0.1) >= 0.95
        assert np.median(err) < 0.05

    def test_accumulated_translation_over_frames(self):
        shape = (96, 96)
        frames = [render(shape, dx=1.2 * t, dy=-0.8 * t) for t in range(4)]
        grid = geo.oval_grid(shape, margin=14.0)
        traj = geo.track_pyramidal_lk(frames, grid)
        d = traj.positions[3] - traj.positions[0]
        err = np.hypot(d[:, 0] - 3.6, d[:, 1] + 2.4)
        assert np.mean(err < 0.1) >= 0.95

    def test_single_step_matches_closed_form(self):
        # quadratic intensity: central differences and bilinear lattice
        # samples are exact, so one tracker iteration must equal the
        # directly assembled least-squares solution
        shape = (64, 64)
        ys, xs = np.mgrid[0:64, 0:64].astype(float)

        def quad(y, x):
            return (5.0 + 2.5 * x + 1.5 * y + 0.010 * x * x
                    - 0.008 * x * y + 0.012 * y * y)

        shift = (0.3, -0.2)
        frame_i = quad(ys, xs)
        frame_j = quad(ys + 0.2, xs - 0.3)
        grid = integer_grid(shape, start=10, step=4)
        opts = geo.TrackerOptions(levels=1, window=9, max_iters=1, eps=1e-12)
        traj = geo.track_pyramidal_lk([frame_i, frame_j], grid, opts)
        hw = 4
        for i in range(0, 113, 7):
            px, py = grid.points[i]
            g_mat = np.zeros((2, 2))
            rhs = np.zeros(2)
            for wy in range(-hw, hw + 1):
                for wx in range(-hw, hw + 1):
                    x, y = px + wx, py + wy
                    gv = np.array([2.5 + 0.020 * x - 0.008 * y,
                                   1.5 - 0.008 * x + 0.024 * y])
                    di = frame_i[int(y), int(x)] - frame_j[int(y), int(x)]
                    g_mat += np.outer(gv, gv)
                    rhs += di * gv
            want = np.linalg.solve(g_mat, rhs)
            got = traj.positions[1, i] - traj.positions[0, i]
            npt.assert_allclose(got, want, atol=1e-6)
            # sanity: one linearized step on a quadratic lands near truth
            assert np.hypot(got[0] - shift[0], got[1] - shift[1]) < 0.1

    def test_mirrored_input_negates_x(self):
        shape = (96, 96)
        ys, xs = np.mgrid[0:96, 0:96].astype(float)
        u = 2.0 + 0.8 * np.sin(0.05 * xs)
        v = -1.0 + 0.5 * np.cos(0.04 * ys)
        frames = [smooth_field(ys, xs), smooth_field(ys - v, xs - u)]
        grid = geo.oval_grid(shape, margin=14.0)
        m_frames = [np.fliplr(f) for f in frames]
        m_pts = grid.points.copy()
        m_pts[:, 0] = shape[1] - 1 - m_pts[:, 0]
        m_grid = geo.GridModel(m_pts, shape)
        traj = geo.track_pyramidal_lk(frames, grid)
        m_traj = geo.track_pyramidal_lk(m_frames, m_grid)
        d = traj.positions[1] - traj.positions[0]
        md = m_traj.positions[1] - m_traj.positions[0]
        ok = ~(traj.lost_mask[1] | m_traj.lost_mask[1])
        assert ok.mean() > 0.9
        npt.assert_allclose(md[ok, 0], -d[ok, 0], atol=0.1)
        npt.assert_allclose(md[ok, 1], d[ok, 1], atol=0.1)

    def test_flat_region_points_lost(self):
        shape = (96, 160)
        frame = render(shape)
        frame[:, 80:] = 100.0
        grid = geo.oval_grid(shape, margin=12.0)
        traj = geo.track_pyramidal_lk([frame, frame], grid,
                                      geo.TrackerOptions(window=9))
        x = grid.points[:, 0]
        deep_flat = x > 80 + 6
        deep_tex = x < 80 - 6
        assert deep_flat.any() and deep_tex.any()
        assert traj.lost_mask[1, deep_flat].all()
        assert not traj.lost_mask[1, deep_tex].any()
        # lost points freeze at their last valid position
        npt.assert_array_equal(traj.positions[1, deep_flat],
                               grid.points[deep_flat])

    def test_levels_clamped_for_small_frames(self):
        shape = (24, 24)
        frame = render(shape)
        grid = geo.oval_grid(shape, margin=5.0)
        opts = geo.TrackerOptions(levels=5, window=9)
        traj = geo.track_pyramidal_lk([frame, frame], grid, opts)
        npt.assert_array_equal(traj.positions[1], grid.points)


class TestRecoverLostPoints:
    def make_traj(self, grid, steps, lost):
        f = len(steps) + 1
        pos = np.empty((f, 113, 2))
        pos[0] = grid.points
        mask = np.zeros((f, 113), dtype=bool)
        for t, step in enumerate(steps, start=1):
            pos[t] = pos[t - 1] + step
            mask[t] = lost
            pos[t, lost] = pos[t - 1, lost]
        return geo.Trajectory(pos, mask)

    def test_no_lost_points_is_identity(self):
        grid = geo.oval_grid((64, 64), margin=8.0)
        traj = self.make_traj(grid, [np.array([1.0, 0.5])] * 2,
                              np.zeros(113, dtype=bool))
        out = geo.recover_lost_points(traj, grid)
        npt.assert_array_equal(out.positions, traj.positions)
        npt.assert_array_equal(out.lost_mask, traj.lost_mask)

    def test_rigid_translation_recovered(self):
        grid = geo.oval_grid((64, 64), margin=8.0)
        lost = np.zeros(113, dtype=bool)
        lost[[5, 40, 77]] = True
        traj = self.make_traj(grid, [np.array([1.5, -0.75])] * 3, lost)
        out = geo.recover_lost_points(traj, grid)
        for t in range(1, 4):
            want = grid.points + t * np.array([1.5, -0.75])
            npt.assert_allclose(out.positions[t], want, atol=1e-9)
        npt.assert_array_equal(out.lost_mask, traj.lost_mask)

    def test_non_lost_entries_untouched(self):
        grid = geo.oval_grid((64, 64), margin=8.0)
        lost = np.zeros(113, dtype=bool)
        lost[10] = True
        rng = np.random.default_rng(3)
        steps = [rng.normal(size=(113, 2))] * 2
        traj = self.make_traj(grid, steps, lost)
        out = geo.recover_lost_points(traj, grid)
        npt.assert_array_equal(out.positions[:, ~lost], traj.positions[:, ~lost])

    def test_hand_computed_neighbor_mean(self):
        # a tight 6-point cluster, everything else far away: the lost
        # points A (index 0) and B (index 1) must average exactly the
        # four cluster survivors
        pts = np.zeros((113, 2))
        pts[0] = (30.0, 30.0)       # A, lost
        pts[1] = (30.4, 30.0)       # B, lost, adjacent to A
        pts[2] = (31.0, 30.0)
        pts[3] = (29.0, 30.0)
        pts[4] = (30.0, 31.0)
        pts[5] = (30.0, 29.0)
        for k in range(6, 113):
            ang = 2 * np.pi * (k - 6) / 107
            pts[k] = (160.0 + 60.0 * np.cos(ang), 160.0 + 60.0 * np.sin(ang))
        grid = geo.GridModel(pts, (320, 320))
        pos = np.stack([pts, pts.copy()])
        pos[1, 2] += (1.0, 0.0)
        pos[1, 3] += (0.0, 1.0)
        pos[1, 4] += (-1.0, 2.0)
        pos[1, 5] += (3.0, -1.0)
        mask = np.zeros((2, 113), dtype=bool)
        mask[1, [0, 1]] = True
        out = geo.recover_lost_points(geo.Trajectory(pos, mask), grid)
        want = np.array([(1.0 + 0.0 - 1.0 + 3.0) / 4,
                         (0.0 + 1.0 + 2.0 - 1.0) / 4])
        npt.assert_allclose(out.positions[1, 0], pts[0] + want, atol=1e-12)
        npt.assert_allclose(out.positions[1, 1], pts[1] + want, atol=1e-12)

    def test_all_points_lost_raises(self):
        grid = geo.oval_grid((64, 64), margin=8.0)
        traj = self.make_traj(grid, [np.zeros(2)], np.ones(113, dtype=bool))
        with pytest.raises(geo.AllPointsLostError):
            geo.recover_lost_points(traj, grid)


class TestDisplacementFeatures:
    def test_static_is_zero_matrix(self):
        grid = geo.oval_grid((64, 64), margin=8.0)
        pos = np.stack([grid.points] * 5)
        traj = geo.Trajectory(pos, np.zeros((5, 113), dtype=bool))
        d = geo.displacement_features(traj)
        assert d.shape == (226, 4)
        npt.assert_array_equal(d, np.zeros((226, 4)))

    def test_pure_translation_rows(self):
        grid = geo.oval_grid((64, 64), margin=8.0)
        pos = np.stack([grid.points + [2.0 * t, -1.0 * t] for t in range(3)])
        traj = geo.Trajectory(pos, np.zeros((3, 113), dtype=bool))
        d = geo.displacement_features(traj)
        npt.assert_allclose(d[0::2, 0], np.full(113, 2.0), atol=1e-12)
        npt.assert_allclose(d[1::2, 0], np.full(113, -1.0), atol=1e-12)
        npt.assert_allclose(d[0::2, 1], np.full(113, 4.0), atol=1e-12)
        npt.assert_allclose(d[1::2, 1], np.full(113, -2.0), atol=1e-12)

    def test_interleaved_layout(self):
        grid = geo.oval_grid((64, 64), margin=8.0)
        pos = np.stack([grid.points, grid.points.copy()])
        pos[1, 7] += (0.5, -0.25)
        traj = geo.Trajectory(pos, np.zeros((2, 113), dtype=bool))
        d = geo.displacement_features(traj)
        assert d[14, 0] == 0.5 and d[15, 0] == -0.25
        assert np.count_nonzero(d) == 2

    def test_single_frame_rejected(self):
        grid = geo.oval_grid((64, 64), margin=8.0)
        traj = geo.Trajectory(grid.points[None],
                              np.zeros((1, 113), dtype=bool))
        with pytest.raises(geo.TooFewFramesError):
            geo.displacement_features(traj)


def motion_classes(rng, n_per, frames=5):
    """Two synthetic displacement-field classes on the standard grid:
    mouth-like lower-face expansion vs brow-like upper-face lift, both
    riding on a per-sequence rigid drift that hurts raw distances."""
    grid = geo.oval_grid((96, 80), margin=10.0)
    pts = grid.points
    cx, cy = pts.mean(axis=0)
    lower = (pts[:, 1] > cy).astype(float)
    upper = (pts[:, 1] <= cy).astype(float)
    radial = (pts - (cx, cy)) / 30.0
    mats, labels = [], []
    for i in range(2 * n_per):
        label = 1 if i < n_per else 2
        amp = 1.0 + 0.25 * rng.standard_normal()
        drift = rng.standard_normal(2)
        cols = []
        for t in range(1, frames):
            s = t / (frames - 1.0)
            if label == 1:
                fld = amp * s * radial * lower[:, None]
            else:
                fld = amp * s * np.stack(
                    [np.zeros(113), -1.2 * upper], axis=1)
            fld = fld + s * drift + 0.08 * rng.standard_normal(fld.shape)
            cols.append(fld.reshape(-1))
        mats.append(np.stack(cols, axis=1))
        labels.append(label)
    return np.array(mats), np.array(labels)


class TestReduceGeometric:
    def test_identity_reduction_is_raw_flatten(self):
        rng = np.random.default_rng(11)
        mats = rng.standard_normal((3, 226, 4))
        red = ss.BidirectionalReducer(
            p=1, f=1, m=226, n=4, d_r=226, d_c=4,
            v_grid=np.eye(226)[None, None],
            w_grid=np.eye(4)[None, None])
        feats = geo.geometric_features(mats, red)
        npt.assert_allclose(feats, mats.reshape(3, -1), atol=1e-12)

    def test_homoscedastic_matches_pooled_fit(self):
        # small enough that both side scatters are full rank at ridge 0
        rng = np.random.default_rng(5)
        base = rng.standard_normal((9, 10, 4))
        shifts = 3.0 * rng.standard_normal((3, 10, 4))
        mats = np.concatenate([base + s for s in shifts])
        labels = np.repeat([1, 2, 3], 9)
        opts = ss.HldaOptions(ridge=0.0)
        hetero = geo.reduce_geometric(mats, labels, 6, 3, opts=opts)
        pooled = geo.reduce_geometric(mats, labels, 6, 3, opts=opts,
                                      method="2dlda")
        npt.assert_array_equal(hetero.w_grid, pooled.w_grid)
        npt.assert_array_equal(hetero.v_grid, pooled.v_grid)

    def test_two_motion_classes_beat_raw_centroid(self):
        rng = np.random.default_rng(23)
        mats, labels = motion_classes(rng, n_per=24)
        test_idx = np.zeros(len(labels), dtype=bool)
        test_idx[2::3] = True
        red = geo.reduce_geometric(mats[~test_idx], labels[~test_idx], 12, 3)
        train_f = geo.geometric_features(mats[~test_idx], red)
        test_f = geo.geometric_features(mats[test_idx], red)

        def centroid_acc(tr_x, tr_y, te_x, te_y):
            cents = np.stack([tr_x[tr_y == c].mean(axis=0) for c in (1, 2)])
            pred = np.argmin(
                ((te_x[:, None] - cents[None]) ** 2).sum(axis=2), axis=1) + 1
            return float(np.mean(pred == te_y))

        raw_tr = mats[~test_idx].reshape(np.sum(~test_idx), -1)
        raw_te = mats[test_idx].reshape(np.sum(test_idx), -1)
        acc_red = centroid_acc(train_f, labels[~test_idx], test_f,
                               labels[test_idx])
        acc_raw = centroid_acc(raw_tr, labels[~test_idx], raw_te,
                               labels[test_idx])
        assert acc_red > acc_raw

    def test_bad_stack_shape(self):
        with pytest.raises(geo.GeometricError):
            geo.reduce_geometric(np.zeros((4, 226)), [1, 1, 2, 2], 3, 2)
