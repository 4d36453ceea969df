import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankad.dataset import (DataError, DataMatrix, MixtureComponent, MixtureDensity,
                            density_from_config, density_to_config, largest_remainder_sizes,
                            load_csv, preset_density, sample_anomaly_box, sample_mixture,
                            save_csv, split)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_plain_three_rows(self, tmp_path):
        data = load_csv(write(tmp_path, "1.0,2.0\n3.0,4.0\n5.0,6.0\n"))
        assert data.n == 3 and data.dim == 2
        assert data.labels is None
        assert np.array_equal(data.points, [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])

    def test_label_column_split(self, tmp_path):
        data = load_csv(write(tmp_path, "1.0,2.0\n3.0,4.0\n5.0,6.0\n"), label_column=1)
        assert data.n == 3 and data.dim == 1
        assert np.array_equal(data.labels, [1, 1, 1])
        assert np.array_equal(data.points.ravel(), [1.0, 3.0, 5.0])

    def test_named_labels(self, tmp_path):
        data = load_csv(write(tmp_path, "1,nominal\n2,anomaly\n"), label_column=1)
        assert np.array_equal(data.labels, [0, 1])

    def test_parse_error_names_row_and_column(self, tmp_path):
        with pytest.raises(DataError, match="row 2, column 1"):
            load_csv(write(tmp_path, "1.0,2.0\nabc,4.0\n"))

    def test_ragged_rows_rejected(self, tmp_path):
        with pytest.raises(DataError, match="ragged"):
            load_csv(write(tmp_path, "1.0,2.0\n3.0\n"))

    def test_empty_file_rejected(self, tmp_path):
        with pytest.raises(DataError, match="empty"):
            load_csv(write(tmp_path, ""))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_csv(tmp_path / "nope.csv")

    def test_header_autodetected(self, tmp_path):
        data = load_csv(write(tmp_path, "f0,f1\n1.0,2.0\n3.0,4.0\n"))
        assert data.n == 2

    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        data = DataMatrix(rng.standard_normal((17, 3)))
        save_csv(data, tmp_path / "out.csv")
        back = load_csv(tmp_path / "out.csv")
        assert np.array_equal(back.points, data.points)

    def test_labeled_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        data = DataMatrix(rng.standard_normal((9, 2)), labels=(np.arange(9) % 2).astype(np.int8))
        save_csv(data, tmp_path / "out.csv")
        back = load_csv(tmp_path / "out.csv", label_column=2)
        assert np.array_equal(back.points, data.points)
        assert np.array_equal(back.labels, data.labels)


class TestDataMatrix:
    def test_rejects_nan(self):
        with pytest.raises(DataError, match="non-finite"):
            DataMatrix(np.array([[1.0, np.nan]]))

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            DataMatrix(np.empty((0, 2)))

    def test_rejects_label_length_mismatch(self):
        with pytest.raises(DataError, match="labels"):
            DataMatrix(np.ones((3, 2)), labels=np.zeros(2, dtype=np.int8))

    def test_immutable(self):
        data = DataMatrix(np.ones((2, 2)))
        with pytest.raises(ValueError):
            data.points[0, 0] = 5.0


class TestMixtureDensity:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(DataError, match="sum to 1"):
            MixtureDensity((MixtureComponent(0.5, [0.0], [1.0]),))

    def test_variance_must_be_positive(self):
        with pytest.raises(DataError, match="positive"):
            MixtureComponent(1.0, [0.0], [0.0])

    def test_pdf_matches_normal_density(self):
        dens = MixtureDensity((MixtureComponent(1.0, [0.0], [1.0]),))
        # standard normal at 0: 1/sqrt(2*pi)
        assert dens.pdf(np.array([0.0])) == pytest.approx(0.3989422804014327, rel=1e-12)

    def test_config_round_trip(self):
        dens = preset_density("synth-sec62")
        back = density_from_config(density_to_config(dens))
        assert len(back.components) == 2
        assert np.array_equal(back.anomaly_box, dens.anomaly_box)
        q = np.array([[1.0, 2.0], [-3.0, 0.5]])
        assert np.array_equal(back.pdf(q), dens.pdf(q))

    def test_unknown_preset_lists_names(self):
        with pytest.raises(DataError, match="toy-fig1"):
            preset_density("nope")


class TestSampleMixture:
    def test_law_of_large_numbers_single_component(self):
        dens = MixtureDensity((MixtureComponent(1.0, [0.0, 0.0], [1.0, 1.0]),))
        data = sample_mixture(dens, 10_000, seed=42)
        assert np.all(np.abs(data.points.mean(axis=0)) < 0.1)
        assert np.all(data.labels == 0)

    def test_component_fractions(self):
        # replay the documented draw protocol to recover component assignments
        dens = preset_density("synth-sec62")
        data = sample_mixture(dens, 600, seed=3)
        rng = np.random.default_rng(3)
        idx = rng.choice(2, size=600, p=[0.2, 0.8])
        assert abs((idx == 0).mean() - 0.2) < 0.06
        # assigned points must be consistent with their component (5 sigma)
        first = data.points[idx == 0]
        assert np.all(np.abs(first[:, 0] - 5.0) < 5.0)
        second = data.points[idx == 1]
        assert np.all(np.abs(second[:, 1]) < 5.0)

    def test_degenerate_single_weight(self):
        dens = MixtureDensity((MixtureComponent(1.0, [7.0], [0.01]),))
        data = sample_mixture(dens, 50, seed=0)
        assert np.all(np.abs(data.points - 7.0) < 1.0)

    def test_deterministic(self):
        dens = preset_density("toy-fig1")
        a = sample_mixture(dens, 100, seed=9)
        b = sample_mixture(dens, 100, seed=9)
        assert np.array_equal(a.points, b.points)

    def test_moment_check_at_4_sigma(self):
        # coordinate-wise mean/variance against the mixture's moments, n=1e4
        dens = preset_density("synth-sec62")
        n = 10_000
        data = sample_mixture(dens, n, seed=11)
        w = np.array([c.weight for c in dens.components])
        mu = np.stack([c.mean for c in dens.components])
        var = np.stack([c.variance for c in dens.components])
        mean_true = w @ mu
        second = w @ (var + mu ** 2)
        var_true = second - mean_true ** 2
        mean_se = np.sqrt(var_true / n)
        assert np.all(np.abs(data.points.mean(axis=0) - mean_true) < 4 * mean_se)
        fourth = 3 * var ** 2 + 6 * var * mu ** 2 + mu ** 4  # E[X^4] per component
        var_of_sq = w @ fourth - second ** 2
        var_se = np.sqrt(var_of_sq / n)  # dominant term of var-estimator noise
        assert np.all(np.abs(data.points.var(axis=0) - var_true) < 4 * var_se)

    def test_rejects_zero_points(self):
        with pytest.raises(DataError):
            sample_mixture(preset_density("toy-fig1"), 0, seed=0)


class TestAnomalyBox:
    def test_paper_box_within_bounds(self):
        data = sample_anomaly_box([[-18, 18], [-18, 18]], 1000, seed=5)
        assert np.all(data.points >= -18) and np.all(data.points <= 18)
        assert np.all(data.labels == 1)

    def test_deterministic_unit_box(self):
        a = sample_anomaly_box([[0, 1]], 4, seed=12)
        b = sample_anomaly_box([[0, 1]], 4, seed=12)
        assert np.array_equal(a.points, b.points)
        assert np.all((a.points >= 0) & (a.points <= 1))

    def test_uniform_mean(self):
        data = sample_anomaly_box([[0, 1]], 100_000, seed=8)
        assert abs(data.points.mean() - 0.5) < 0.01

    def test_inverted_bounds_rejected(self):
        with pytest.raises(DataError, match="strictly below"):
            sample_anomaly_box([[1, 0]], 5, seed=0)


class TestSplit:
    def test_even_halves(self):
        data = DataMatrix(np.arange(20.0).reshape(10, 2))
        parts = split(data, (0.5, 0.5), seed=0)
        assert [p.n for p in parts] == [5, 5]

    def test_identity_partition(self):
        data = DataMatrix(np.arange(12.0).reshape(6, 2))
        (part,) = split(data, (1.0,), seed=3)
        assert sorted(map(tuple, part.points)) == sorted(map(tuple, data.points))

    def test_largest_remainder_seven(self):
        assert largest_remainder_sizes(7, (0.5, 0.5)) == [4, 3]

    def test_bad_fractions(self):
        data = DataMatrix(np.ones((4, 1)))
        with pytest.raises(DataError, match="sum to 1"):
            split(data, (0.5, 0.4), seed=0)

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(4, 40), parts=st.integers(2, 4), seed=st.integers(0, 999))
    def test_partition_property(self, n, parts, seed):
        data = DataMatrix(np.random.default_rng(seed).standard_normal((n, 2)))
        fractions = [1.0 / parts] * parts
        pieces = split(data, fractions, seed=seed)
        assert sum(p.n for p in pieces) == n
        merged = np.concatenate([p.points for p in pieces])
        assert sorted(map(tuple, merged)) == sorted(map(tuple, data.points))

    def test_labels_travel_with_rows(self):
        labels = np.array([0, 1, 0, 1, 0, 1], dtype=np.int8)
        data = DataMatrix(np.arange(6.0).reshape(6, 1), labels=labels)
        pieces = split(data, (0.5, 0.5), seed=1)
        for piece in pieces:
            for row, lab in zip(piece.points, piece.labels):
                assert lab == labels[int(row[0])]
