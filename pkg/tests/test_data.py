import numpy as np
import pytest
from PIL import Image

from txt2img_mhn.blobs import make_blob_world
from txt2img_mhn.data import (
    ImageDecodeError,
    ManifestError,
    Record,
    ingest,
    load_image,
    parse_manifest,
    save_png,
    write_blob_world,
    write_manifest,
)


@pytest.fixture
def world_dir(tmp_path):
    train = make_blob_world(2, image_size=16, rng=np.random.default_rng(1))
    test = make_blob_world(1, image_size=16, rng=np.random.default_rng(2))
    return write_blob_world(tmp_path / "world", train, test), train, test


def write_lines(path, *lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestManifest:
    def test_blob_world_round_trip(self, world_dir):
        manifest, train, test = world_dir
        data = ingest(manifest, 16)
        assert len(data) == 9 and data.class_names == ["blue", "green", "red"]
        tr, te = data.split("train"), data.split("test")
        assert len(tr) == 6 and len(te) == 3
        # 8-bit PNG storage loses at most half a grey level
        np.testing.assert_allclose(tr.images, train.images, atol=0.5 / 255 + 1e-6)
        np.testing.assert_allclose(te.images, test.images, atol=0.5 / 255 + 1e-6)
        assert [r.captions for r in te.records] == [tuple(c) for c in test.captions]
        assert [data.class_names[i] for i in tr.labels()] == [train.class_names[i] for i in train.labels]

    def test_splits_never_mix(self, world_dir):
        data = ingest(world_dir[0], 16)
        train_paths = {r.image_path for r in data.split("train").records}
        test_paths = {r.image_path for r in data.split("test").records}
        assert train_paths.isdisjoint(test_paths)
        assert all(r.split == "test" for r in data.split("test").records)

    def test_comments_blank_lines_and_relative_paths(self, tmp_path):
        path = write_lines(tmp_path / "m.tsv", "# header", "", "train\tred\timgs/a.png\tone| two |")
        (rec,) = parse_manifest(path)
        assert rec.image_path == tmp_path / "imgs" / "a.png"
        assert rec.captions == ("one", "two")

    @pytest.mark.parametrize(
        "line,match",
        [
            ("train\tred\ta.png", "4 tab-separated"),
            ("dev\tred\ta.png\tcap", "split"),
            ("train\t\ta.png\tcap", "class"),
            ("train\tred\ta.png\t | ", "no captions"),
        ],
    )
    def test_errors_carry_line_numbers(self, tmp_path, line, match):
        path = write_lines(tmp_path / "m.tsv", "# ok", "train\tred\ta.png\tcap", line)
        with pytest.raises(ManifestError, match=match) as err:
            parse_manifest(path)
        assert ":3:" in str(err.value)

    def test_writer_rejects_separator_characters(self, tmp_path):
        with pytest.raises(ManifestError):
            write_manifest(tmp_path / "m.tsv", [Record("train", "red", tmp_path / "a.png", ("a|b",))])

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            parse_manifest(tmp_path / "none.tsv")

    def test_empty_manifest(self, tmp_path):
        with pytest.raises(ManifestError, match="no records"):
            ingest(write_lines(tmp_path / "m.tsv", "# nothing"), 8)


class TestImages:
    def test_png_round_trip_exact_on_grey_levels(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 256, (3, 6, 6)).astype(np.float32) / 255
        save_png(img, tmp_path / "x.png")
        np.testing.assert_array_equal(load_image(tmp_path / "x.png", 6), img)

    def test_resize_keeps_constant_images_constant(self, tmp_path):
        Image.new("RGB", (40, 24), (200, 10, 60)).save(tmp_path / "c.png")
        out = load_image(tmp_path / "c.png", 8)
        assert out.shape == (3, 8, 8)
        np.testing.assert_allclose(out[:, 0, 0], np.array([200, 10, 60]) / 255, atol=1e-7)
        assert np.ptp(out.reshape(3, -1), axis=1).max() == 0

    def test_grayscale_and_alpha_become_rgb(self, tmp_path):
        Image.new("L", (4, 4), 128).save(tmp_path / "g.png")
        Image.new("RGBA", (4, 4), (1, 2, 3, 4)).save(tmp_path / "a.png")
        assert load_image(tmp_path / "g.png", 4).shape == (3, 4, 4)
        np.testing.assert_allclose(load_image(tmp_path / "a.png", 4)[:, 0, 0], np.array([1, 2, 3]) / 255)

    def test_undecodable_file_names_the_record(self, tmp_path):
        (tmp_path / "bad.png").write_bytes(b"not an image")
        with pytest.raises(ImageDecodeError, match="record 3") as err:
            load_image(tmp_path / "bad.png", 8, index=3)
        assert err.value.index == 3

    def test_missing_image(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="record 0"):
            load_image(tmp_path / "gone.png", 8)

