import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mapnet import data as D
from mapnet.errors import (
    CorruptionError,
    FormatError,
    GenerationError,
    IOFailure,
    UsageError,
)


def scene_spec(**kw):
    defaults = dict(seed=0, size=(128, 128), buildings=(3, 8),
                    scale=(10, 40), noise=0.02)
    defaults.update(kw)
    return D.SceneSpec(**defaults)


class TestGenerateScene:
    def test_deterministic_bitwise(self):
        a = D.generate_scene(scene_spec(), "scene0")
        b = D.generate_scene(scene_spec(), "scene0")
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.mask, b.mask)

    def test_scene_id_changes_content(self):
        a = D.generate_scene(scene_spec(), "scene0")
        b = D.generate_scene(scene_spec(), "scene1")
        assert not np.array_equal(a.image, b.image)

    def test_shapes_and_ranges(self):
        s = D.generate_scene(scene_spec(), "s")
        assert s.image.shape == (1, 3, 128, 128)
        assert s.mask.shape == (1, 1, 128, 128)
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0
        assert set(np.unique(s.mask)) <= {0.0, 1.0}

    def test_zero_buildings_gives_empty_mask(self):
        s = D.generate_scene(scene_spec(buildings=(0, 0)), "empty")
        np.testing.assert_array_equal(s.mask, 0.0)

    def test_foreground_fraction_in_band(self):
        for i in range(5):
            s = D.generate_scene(scene_spec(seed=i), f"scene{i}")
            frac = s.mask.mean()
            assert 0.05 <= frac <= 0.6

    def test_unreachable_band_raises(self):
        spec = scene_spec(size=(64, 64), buildings=(60, 60),
                          scale=(40, 60), max_retries=3)
        with pytest.raises(GenerationError):
            D.generate_scene(spec, "toofull")

    def test_tiny_scale_rejected(self):
        with pytest.raises(UsageError):
            D.generate_scene(scene_spec(scale=(2, 10)), "s")

    def test_all_shape_kinds_rasterize(self):
        for kind in ("rectangle", "rotated", "l_shape"):
            s = D.generate_scene(
                scene_spec(shapes=(kind,), buildings=(2, 4)), f"k_{kind}"
            )
            assert s.mask.sum() > 0


def random_raster(hw, seed=0, sid="parent"):
    g = np.random.default_rng(seed)
    return D.Sample(
        id=sid,
        image=g.uniform(size=(1, 3, *hw)).astype(np.float32),
        mask=(g.uniform(size=(1, 1, *hw)) > 0.5).astype(np.float32),
    )


class TestTiling:
    def test_even_grid(self):
        tiles = D.tile(random_raster((128, 128)), (64, 64))
        assert len(tiles) == 4
        assert [t.origin[1:] for t in tiles] == [
            (0, 0), (0, 64), (64, 0), (64, 64)
        ]

    def test_trailing_strips_edge_anchored(self):
        tiles = D.tile(random_raster((650, 650)), (512, 512))
        assert len(tiles) == 4
        assert {t.origin[1:] for t in tiles} == {
            (0, 0), (0, 138), (138, 0), (138, 138)
        }

    def test_tile_larger_than_raster(self):
        with pytest.raises(UsageError):
            D.tile(random_raster((32, 32)), (64, 64))

    def test_round_trip_identity_even(self):
        parent = random_raster((256, 192), seed=1)
        back = D.stitch(D.tile(parent, (64, 64)), parent.hw)
        np.testing.assert_array_equal(back.image, parent.image)
        np.testing.assert_array_equal(back.mask, parent.mask)

    def test_round_trip_identity_large(self):
        parent = random_raster((2048, 2048), seed=2)
        tiles = D.tile(parent, (512, 512))
        assert len(tiles) == 16
        back = D.stitch(tiles, parent.hw)
        np.testing.assert_array_equal(back.image, parent.image)
        np.testing.assert_array_equal(back.mask, parent.mask)

    @settings(max_examples=25, deadline=None)
    @given(
        h=st.integers(16, 200),
        w=st.integers(16, 200),
        th=st.integers(8, 64),
        tw=st.integers(8, 64),
        seed=st.integers(0, 100),
    )
    def test_round_trip_identity_property(self, h, w, th, tw, seed):
        th, tw = min(th, h), min(tw, w)
        parent = random_raster((h, w), seed=seed)
        back = D.stitch(D.tile(parent, (th, tw)), parent.hw)
        np.testing.assert_array_equal(back.image, parent.image)
        np.testing.assert_array_equal(back.mask, parent.mask)

    def test_stitch_detects_gaps(self):
        parent = random_raster((128, 128))
        tiles = D.tile(parent, (64, 64))
        with pytest.raises(CorruptionError):
            D.stitch(tiles[:-1], parent.hw)

    def test_stitch_requires_origins(self):
        t = random_raster((64, 64))
        with pytest.raises(UsageError):
            D.stitch([t], (64, 64))


class TestSplit:
    def _samples(self, n):
        return [random_raster((8, 8), seed=i, sid=f"s{i}") for i in range(n)]

    def test_ten_samples_split_6_1_3(self):
        train, val, test = D.split(self._samples(10))
        assert (len(train), len(val), len(test)) == (6, 1, 3)

    def test_deterministic(self):
        samples = self._samples(20)
        a = D.split(samples, seed=4)
        b = D.split(samples, seed=4)
        assert [[s.id for s in part] for part in a] == \
               [[s.id for s in part] for part in b]

    def test_disjoint_and_complete(self):
        samples = self._samples(23)
        train, val, test = D.split(samples)
        ids = [s.id for s in train] + [s.id for s in val] + [s.id for s in test]
        assert sorted(ids) == sorted(s.id for s in samples)
        assert len(set(ids)) == len(ids)

    def test_remainder_goes_to_train(self):
        train, val, test = D.split(self._samples(11))
        assert len(val) == round(11 / 10) and len(test) == round(33 / 10)
        assert len(train) == 11 - len(val) - len(test)

    def test_too_few_samples(self):
        with pytest.raises(UsageError):
            D.split(self._samples(2))

    def test_bad_ratios(self):
        with pytest.raises(UsageError):
            D.split(self._samples(10), ratios=(6, 0, 4))


class TestPnmIO:
    def test_ppm_header_and_payload(self, tmp_path):
        img = np.zeros((1, 3, 2, 2), dtype=np.float32)
        img[0, 0, 0, 0] = 1.0  # top-left pixel pure red
        path = tmp_path / "t.ppm"
        D.write_image_ppm(path, img)
        raw = path.read_bytes()
        assert raw.startswith(b"P6\n2 2\n255\n")
        payload = raw[len(b"P6\n2 2\n255\n"):]
        assert len(payload) == 12
        assert payload[:3] == bytes([255, 0, 0])

    def test_image_round_trip(self, tmp_path):
        g = np.random.default_rng(0)
        quant = g.integers(0, 256, size=(1, 3, 5, 7)).astype(np.uint8)
        img = quant.astype(np.float32) / 255.0
        path = tmp_path / "rt.ppm"
        D.write_image_ppm(path, img)
        back = D.read_image(path)
        np.testing.assert_array_equal(back, img)

    def test_mask_round_trip(self, tmp_path):
        g = np.random.default_rng(1)
        mask = (g.uniform(size=(1, 1, 6, 4)) > 0.5).astype(np.float32)
        path = tmp_path / "m.pgm"
        D.write_mask_pgm(path, mask)
        np.testing.assert_array_equal(D.read_mask(path), mask)

    def test_write_read_write_stable(self, tmp_path):
        s = D.generate_scene(scene_spec(), "io")
        p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
        D.write_image_ppm(p1, s.image)
        D.write_image_ppm(p2, D.read_image(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_gray_round_trip(self, tmp_path):
        vals = np.linspace(0, 1, 16).reshape(4, 4)
        path = tmp_path / "g.pgm"
        D.write_gray_pgm(path, vals)
        back = D.read_gray(path)
        np.testing.assert_array_equal(back, np.round(vals * 255).astype(np.uint8))

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "bad.pgm"
        D.write_mask_pgm(path, np.ones((1, 1, 4, 4), dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(CorruptionError):
            D.read_mask(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad2.pgm"
        path.write_bytes(b"P3\n2 2\n255\n" + bytes(4))
        with pytest.raises(FormatError):
            D.read_mask(path)

    def test_wrong_maxval_rejected(self, tmp_path):
        path = tmp_path / "bad3.pgm"
        path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(FormatError):
            D.read_mask(path)

    def test_comments_in_header_accepted(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes([0, 255, 0, 255]))
        arr = D.read_gray(path)
        np.testing.assert_array_equal(arr, [[0, 255], [0, 255]])

    def test_missing_file(self, tmp_path):
        with pytest.raises(IOFailure):
            D.read_image(tmp_path / "nope.ppm")


class TestDatasetDirectory:
    def test_write_then_load_round_trip(self, tmp_path):
        scenes = [D.generate_scene(scene_spec(seed=i), f"sc{i}")
                  for i in range(2)]
        tiles = [t for s in scenes for t in D.tile(s, (64, 64))]
        train, val, test = D.split(tiles)
        root = tmp_path / "ds"
        D.write_dataset(root, {"train": train, "val": val, "test": test})
        assert (root / "index.csv").exists()
        loaded = D.load_dataset(root, "train")
        assert sorted(s.id for s in loaded) == sorted(s.id for s in train)
        by_id = {s.id: s for s in loaded}
        for s in train:
            np.testing.assert_array_equal(by_id[s.id].mask, s.mask)
            # images survive 8-bit quantization exactly after one round trip
            quant = np.round(s.image * 255) / 255
            np.testing.assert_allclose(by_id[s.id].image, quant, atol=1e-7)

    def test_load_missing_manifest(self, tmp_path):
        with pytest.raises(IOFailure):
            D.load_dataset(tmp_path / "nothing", "train")
