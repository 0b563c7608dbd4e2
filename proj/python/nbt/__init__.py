"""Grounded template captioning with a pointer-sentinel decoder."""

import json

from . import _core
from ._core import (
    CaptionModel,
    CategoryMap,
    __version__,
    check_gradients,
    corpus_bleu,
    f1,
    filter_proposals,
    iou,
    location_feature,
    tokenize,
)


def synthesize(category_map, **spec):
    """Synthetic image records as dicts. Keyword arguments override spec fields."""
    return [json.loads(r) for r in _core.synthesize_json(json.dumps(spec), category_map)]


def caption(model, record, mode="greedy", beam_width=3, constrain_top=1, oracle_regions=False):
    """Caption one record dict with a loaded CaptionModel."""
    return json.loads(model.caption_json(json.dumps(record), mode, beam_width, constrain_top, oracle_regions))


__all__ = [
    "CaptionModel",
    "CategoryMap",
    "__version__",
    "caption",
    "check_gradients",
    "corpus_bleu",
    "f1",
    "filter_proposals",
    "iou",
    "location_feature",
    "synthesize",
    "tokenize",
]
