import numpy as np
import pytest

from txt2img_mhn import tensor as T
from txt2img_mhn.blobs import COLORS, GROUNDS, keyword_table, make_blob_world, render_blob
from txt2img_mhn.gradcheck import check_gradients
from txt2img_mhn.tensor import Tensor
from txt2img_mhn.zeroshot import (
    Classifier,
    ClassifierConfig,
    LabeledImageSet,
    ProvenanceError,
    ZeroShotReport,
    label_from_caption,
    overall_accuracy,
    per_class_accuracy,
    read_report,
    train_classifier,
    write_oa_report,
    zeroshot_pipeline,
)

CLASSES = ["red", "green", "blue"]
FAST = ClassifierConfig(widths=(8, 16), epochs=15, lr=1e-2, batch_size=16)


@pytest.fixture(scope="module")
def real_test():
    world = make_blob_world(8, CLASSES, image_size=16, rng=np.random.default_rng(11))
    return LabeledImageSet(world.images, world.labels, CLASSES, provenance="real-test")


def colour_synthesizer(captions):
    """Renders the colour named in each caption: a semantically faithful stand-in generator."""
    rng = np.random.default_rng(0)
    out = []
    for c in captions:
        name = CLASSES[label_from_caption(c, CLASSES)]
        out.append(render_blob(COLORS[name], "square", GROUNDS["white"], 0.3, rng.uniform(0.35, 0.65, 2), 16))
    return np.stack(out)


class TestCaptionLabels:
    @pytest.mark.parametrize(
        "caption,expected",
        [
            ("a red square on white ground", 0),
            ("A BLUE circle!", 2),
            ("reddish tones everywhere", None),
            ("a red and a green blob", None),
            ("nothing here", None),
        ],
    )
    def test_single_class_lookup(self, caption, expected):
        assert label_from_caption(caption, CLASSES) == expected

    def test_longest_phrase_wins_overlaps(self):
        table = {"residential": ["residential"], "dense residential": ["dense residential"]}
        assert label_from_caption("a dense residential area", table) == 1
        assert label_from_caption("a residential area", table) == 0

    def test_keyword_table_is_identity(self):
        assert keyword_table(CLASSES) == {"red": ["red"], "green": ["green"], "blue": ["blue"]}


class TestAccuracy:
    def test_hand_counted(self):
        test = LabeledImageSet(np.zeros((5, 3, 2, 2)), [0, 1, 1, 2, 2], CLASSES, provenance="real-test")
        pred = np.array([0, 1, 0, 2, 0])
        assert overall_accuracy(lambda _: pred, test) == pytest.approx(3 / 5)
        assert per_class_accuracy(pred, test) == {"red": 1.0, "green": 0.5, "blue": 0.5}

    def test_empty_test_set(self):
        with pytest.raises(ValueError):
            overall_accuracy(lambda x: x, LabeledImageSet(np.zeros((0, 3, 2, 2)), [], CLASSES))

    def test_label_validation(self):
        with pytest.raises(ValueError):
            LabeledImageSet(np.zeros((2, 3, 2, 2)), [0, 3], CLASSES)
        with pytest.raises(ValueError):
            LabeledImageSet(np.zeros((2, 3, 2, 2)), [0], CLASSES)


class TestProvenance:
    def test_shared_provenance_is_refused(self, real_test, rng):
        with pytest.raises(ProvenanceError, match="provenance"):
            train_classifier(LabeledImageSet(real_test.images, real_test.labels, CLASSES, provenance="real-test"), FAST, rng, held_out=real_test)

    def test_overlapping_ids_are_refused(self, real_test, rng):
        leaked = LabeledImageSet(real_test.images, real_test.labels, CLASSES, provenance="generated", ids=list(real_test.ids))
        with pytest.raises(ProvenanceError, match="held-out"):
            train_classifier(leaked, FAST, rng, held_out=real_test)

    def test_single_class_training_set(self, rng):
        with pytest.raises(ValueError, match="two classes"):
            train_classifier(LabeledImageSet(np.zeros((3, 3, 8, 8)), [1, 1, 1], CLASSES), FAST, rng)


class TestClassifier:
    def test_gradients(self, rng):
        cfg = ClassifierConfig(widths=(2,))
        model = Classifier.init(cfg, 3, rng)
        names = list(model.params)
        arrays = [rng.normal(0, 0.5, size=model.params[k].shape) for k in names]
        x, y = rng.random((2, 3, 4, 4)), np.array([0, 2])

        def loss(leaves):
            m = Classifier(cfg, 3, dict(zip(names, leaves)))
            return T.cross_entropy(m.logits(Tensor(x)), y)

        assert max(check_gradients(loss, arrays)) < 1e-3

    def test_outputs(self, real_test, rng):
        model = Classifier.init(FAST, 3, rng)
        probs = model.class_probs(real_test.images)
        np.testing.assert_allclose(probs.sum(1), 1.0, atol=1e-6)
        assert model.features(real_test.images).shape == (len(real_test), 16)
        np.testing.assert_array_equal(model.predict(real_test.images), probs.argmax(1))

    def test_state_dict_round_trip(self, real_test, rng):
        model = Classifier.init(FAST, 3, rng)
        again = Classifier.from_state_dict(FAST, model.state_dict())
        np.testing.assert_array_equal(again.predict(real_test.images), model.predict(real_test.images))
        with pytest.raises(ValueError):
            Classifier.from_state_dict(ClassifierConfig(widths=(4,)), model.state_dict())


class TestPipeline:
    CAPTIONS = [f"a {c} blob" for c in CLASSES] * 10 + ["an unlabelled blob", "a red and blue blob"]

    def test_faithful_generator_scores_high(self, real_test):
        report = zeroshot_pipeline(colour_synthesizer, self.CAPTIONS, CLASSES, real_test, FAST, np.random.default_rng(0))
        assert report.skipped == 2 and report.n_train_generated == 30 and report.n_test_real == 24
        assert report.oa > 0.8

    def test_constant_generator_scores_chance(self, real_test):
        grey = lambda caps: np.full((len(caps), 3, 16, 16), 0.5, np.float32)  # noqa: E731
        report = zeroshot_pipeline(grey, self.CAPTIONS, CLASSES, real_test, FAST, np.random.default_rng(0))
        assert abs(report.oa - 1 / 3) <= 0.15

    def test_report_round_trip(self, tmp_path):
        path = tmp_path / "oa.txt"
        write_oa_report(path, ZeroShotReport(0.75, {"red": 1.0, "blue": 0.5}, 2, 64, 30), header="# hdr")
        assert read_report(path) == {
            "oa": "0.750000",
            "per_class.red": "1.000000",
            "per_class.blue": "0.500000",
            "skipped": "2",
            "n_train_generated": "64",
            "n_test_real": "30",
        }
