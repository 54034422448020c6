import json

import numpy as np
import pytest

from conftest import smooth_image
from featreg.bspline import ControlLattice, lattice_to_dense
from featreg.core import DisplacementField, FeatureMap, Image2D
from featreg.features import (
    ExternalFeatureSet,
    commutativity_gap,
    filterbank_extractor,
    identity_extractor,
    load_external,
    pca_project,
)
from featreg.metrics import feature_l1
from featreg.npyio import save_tensor
from featreg.resampler import warp_array, warp_image


def smooth_field(seed, shape, max_px):
    rng = np.random.default_rng(seed)
    lat = ControlLattice(rng.normal(size=(2, 5, 5)), shape)
    u = lattice_to_dense(lat).data
    mag = np.sqrt(u[0] ** 2 + u[1] ** 2).max()
    return DisplacementField(u * (max_px / mag))


class TestIdentityExtractor:
    def test_feature_metric_reduces_to_intensity(self, rng):
        ext = identity_extractor()
        a = Image2D(rng.uniform(0, 1, size=(16, 16)))
        b = Image2D(rng.uniform(0, 1, size=(16, 16)))
        via_features = feature_l1(ext.extract(a), ext.extract(b)).value
        assert via_features == pytest.approx(np.mean(np.abs(a.data - b.data)), abs=1e-15)

    def test_commutes_with_warp(self, rng):
        img = smooth_image(5)
        u = smooth_field(0, img.shape, 3.0)
        _, gap = commutativity_gap(img, u, identity_extractor())
        assert gap == 0.0

    def test_backward_is_identity(self, rng):
        ext = identity_extractor()
        img = Image2D(rng.uniform(0, 1, size=(8, 8)))
        upstream = rng.normal(size=(1, 8, 8))
        assert np.array_equal(ext.backward(img, upstream), upstream[0])


class TestFilterbankExtractor:
    def test_deterministic(self):
        img = smooth_image(1)
        f1 = filterbank_extractor(3, 4, 2).extract(img)
        f2 = filterbank_extractor(3, 4, 2).extract(img)
        assert f1.data.tobytes() == f2.data.tobytes()

    def test_different_seeds_differ(self):
        img = smooth_image(1)
        f1 = filterbank_extractor(0, 4, 2).extract(img)
        f2 = filterbank_extractor(1, 4, 2).extract(img)
        assert not np.array_equal(f1.data, f2.data)

    @pytest.mark.parametrize("h,w,d", [(16, 16, 1), (16, 16, 2), (15, 17, 2)])
    def test_shape_contract(self, h, w, d):
        ext = filterbank_extractor(0, 5, d)
        img = Image2D(np.random.default_rng(0).uniform(0, 1, size=(h, w)))
        out = ext.extract(img)
        assert out.data.shape == (5, -(-h // d), -(-w // d))

    def test_constant_image_constant_features(self):
        ext = filterbank_extractor(0, 4, 1)
        out = ext.extract(Image2D(np.full((12, 12), 2.0))).data
        for c in range(4):
            assert np.abs(out[c] - out[c].flat[0]).max() < 1e-12
            expected = np.logaddexp(0.0, 2.0 * ext.kernels[c].sum())
            assert out[c].flat[0] == pytest.approx(expected, abs=1e-12)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            filterbank_extractor(0, 0, 1)
        with pytest.raises(ValueError):
            filterbank_extractor(0, 4, 3)

    @pytest.mark.parametrize("d", [1, 2])
    def test_backward_fd_through_extract_and_warp(self, d, rng):
        ext = filterbank_extractor(2, 3, d)
        img = smooth_image(9, size=16)
        u = rng.uniform(0.1, 0.4, size=(2, 16, 16))
        upstream = rng.normal(size=ext.extract(img).data.shape)

        def loss(field):
            warped = Image2D(warp_array(img.data, field))
            return float(np.sum(upstream * ext.extract(warped).data))

        warped = Image2D(warp_array(img.data, u))
        g_img = ext.backward(warped, upstream)
        from featreg.resampler import warp_array_backward

        g_u = warp_array_backward(img.data, u, g_img)
        h = 1e-4
        direction = rng.normal(size=(2, 16, 16))
        fd = (loss(u + h * direction) - loss(u - h * direction)) / (2 * h)
        an = float(np.sum(g_u * direction))
        assert abs(fd - an) / max(abs(fd), abs(an)) < 1e-4


class TestLoadExternal:
    def make_set(self, tmp_path, channels=256, shape=(64, 64)):
        rng = np.random.default_rng(0)
        feat_path = tmp_path / "feat.npy"
        save_tensor(rng.normal(size=(channels,) + shape).astype(np.float32), feat_path)
        manifest = {
            "extractor": "medsam_vit_b",
            "channels": channels,
            "entries": [
                {"id": "case01", "image_path": "img.npy", "feature_path": "feat.npy"}
            ],
        }
        mpath = tmp_path / "manifest.json"
        mpath.write_text(json.dumps(manifest))
        return ExternalFeatureSet.from_manifest(mpath)

    def test_medsam_shape(self, tmp_path):
        fs = self.make_set(tmp_path, channels=256)
        fm = load_external(fs, "case01")
        assert fm.data.shape == (256, 64, 64)
        assert fm.source_tag == "medsam_vit_b"

    def test_dinov2_channels(self, tmp_path):
        fs = self.make_set(tmp_path, channels=1024, shape=(8, 8))
        assert load_external(fs, "case01").channels == 1024

    def test_missing_id(self, tmp_path):
        fs = self.make_set(tmp_path)
        with pytest.raises(KeyError):
            load_external(fs, "case99")

    def test_channel_mismatch(self, tmp_path):
        fs = self.make_set(tmp_path, channels=256)
        fs2 = ExternalFeatureSet("medsam_vit_b", 128, fs.entries)
        with pytest.raises(ValueError):
            load_external(fs2, "case01")


class TestPCAProject:
    def test_rank_one_data(self, rng):
        ch1 = rng.normal(size=(6, 6))
        f = FeatureMap(np.stack([ch1, 3.0 * ch1]))
        out = pca_project(f, 2)
        var = out.data.reshape(2, -1).var(axis=1)
        assert var[1] / var[0] < 1e-10

    def test_variance_preserved_at_full_rank(self, rng):
        f = FeatureMap(rng.normal(size=(4, 8, 8)))
        out = pca_project(f, 4)
        total_in = f.data.reshape(4, -1).T.var(axis=0, ddof=0).sum()
        total_out = out.data.reshape(4, -1).T.var(axis=0, ddof=0).sum()
        assert abs(total_in - total_out) < 1e-8

    def test_channels_uncorrelated(self, rng):
        f = FeatureMap(rng.normal(size=(5, 10, 10)))
        out = pca_project(f, 5).data.reshape(5, -1)
        corr = np.corrcoef(out)
        off = corr - np.diag(np.diag(corr))
        assert np.abs(off).max() < 1e-8

    def test_constant_features_zero_scores(self):
        f = FeatureMap(np.ones((3, 5, 5)))
        out = pca_project(f, 2)
        assert np.array_equal(out.data, np.zeros((2, 5, 5)))

    def test_k_out_of_range(self, rng):
        f = FeatureMap(rng.normal(size=(3, 4, 4)))
        with pytest.raises(ValueError):
            pca_project(f, 0)
        with pytest.raises(ValueError):
            pca_project(f, 4)

    def test_sign_convention_deterministic(self, rng):
        f = FeatureMap(rng.normal(size=(4, 8, 8)))
        a = pca_project(f, 3).data
        b = pca_project(f, 3).data
        assert np.array_equal(a, b)


class TestCommutativityGap:
    def test_zero_field_zero_gap(self):
        img = smooth_image(2)
        u = DisplacementField.zero(img.shape)
        gap_map, gap = commutativity_gap(img, u, filterbank_extractor(0, 4, 2))
        assert gap == 0.0
        assert np.array_equal(gap_map.data, np.zeros_like(gap_map.data))

    def test_filterbank_gap_positive(self):
        img = smooth_image(2, size=64)
        u = smooth_field(1, img.shape, 4.0)
        gap_map, gap = commutativity_gap(img, u, filterbank_extractor(0, 4, 2))
        assert gap > 0.0
        assert gap_map.data.shape == (4, 32, 32)
