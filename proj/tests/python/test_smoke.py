import json
import math
import os
import subprocess
from pathlib import Path

import pytest

import nbt

SOURCE = Path(os.environ.get("NBT_SOURCE_DIR", Path(__file__).resolve().parents[2]))
MAP_PATH = SOURCE / "data" / "toy_category_map.json"


@pytest.fixture(scope="module")
def cmap():
    return nbt.CategoryMap.load(str(MAP_PATH))


def test_module_metadata():
    assert nbt.__version__ == "0.1.0"
    assert nbt._core.__doc__


def test_geometry():
    assert nbt.iou([0, 0, 2, 2], [1, 1, 3, 3]) == pytest.approx(1 / 7)
    assert nbt.iou([0, 0, 1, 1], [2, 2, 3, 3]) == 0.0
    assert nbt.location_feature([10, 20, 30, 40], 100, 100) == pytest.approx([0.1, 0.2, 0.3, 0.4])
    kept = nbt.filter_proposals([([0, 0, 10, 10], 0, 0.8), ([0, 0, 10, 10], 0, 0.9), ([50, 50, 60, 60], 1, 0.4)])
    assert [(list(box), c, p) for box, c, p in kept] == [([0, 0, 10, 10], 0, 0.9)]
    with pytest.raises(ValueError):
        nbt.iou([0, 0, 0, 1], [0, 0, 1, 1])


def test_category_map(cmap):
    assert "dog" in cmap.names()
    assert cmap.lemma("puppies") == "puppy"
    assert cmap.pluralize("puppy") == "puppies"
    assert cmap.pluralize("sheep") == "sheep"
    assert cmap.category_of("kittens") == "cat"
    assert cmap.category_of("busy") is None
    assert nbt.tokenize("A Puppy, sitting.") == ["a", "puppy", "sitting"]


def test_metrics():
    assert nbt.corpus_bleu([["the", "the", "the"]], [[["the", "cat"]]], 1) == pytest.approx(1 / 3)
    assert nbt.corpus_bleu([["the", "cat"]], [[["the", "cat", "sat", "on", "the", "mat"]]], 1) == pytest.approx(
        math.exp(-2)
    )
    assert nbt.f1(2, 1, 1) == 2 / 3


def test_synthesize(cmap):
    records = nbt.synthesize(cmap, num_images=5, categories=["cat", "dog"], seed=3)
    assert len(records) == 5
    assert all(r["captions"] for r in records)
    assert records == nbt.synthesize(cmap, num_images=5, categories=["cat", "dog"], seed=3)


def test_gradients():
    report = nbt.check_gradients(hidden=6, regions=3, vocab=8)
    assert report["max_relative_error"] < 1e-3
    assert report["checked"] > 0


def test_caption_from_trained_checkpoint(cmap, tmp_path):
    cli = os.environ.get("NBT_CLI")
    if not cli:
        pytest.skip("command-line tool not available")
    config = SOURCE / "configs" / "toy.json"
    data = tmp_path / "data.jsonl"
    ckpt = tmp_path / "ckpt.json"
    subprocess.run([cli, "synth", "--config", str(config), "--num-images", "10", "--out", str(data)], check=True)
    subprocess.run(
        [cli, "train", "--config", str(config), "--data", str(data), "--epochs", "2", "--out", str(ckpt)], check=True
    )
    model = nbt.CaptionModel(str(ckpt), cmap)
    record = json.loads(data.read_text().splitlines()[0])
    out = nbt.caption(model, record)
    assert out["image_id"] == record["image_id"]
    assert len(out["template"]) <= 16
    beam = nbt.caption(model, record, mode="beam", beam_width=1)
    assert beam["caption"] == out["caption"]
    constrained = nbt.caption(model, record, mode="constrained", constrain_top=1)
    assert constrained.get("constraints_satisfied", True) in (True, False)
    with pytest.raises(ValueError):
        nbt.caption(model, record, mode="sideways")
