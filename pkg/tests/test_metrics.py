import dataclasses
import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundkit.core import BoundingBox, Track, TrackEntry
from groundkit.metrics import (
    ALL_METRICS,
    HttpSimilarity,
    ap50_video,
    average_precision,
    cider_d,
    cider_d_scores,
    default_phrase_similarity,
    evaluate,
    f1_entities,
    grounding_recall,
    meteor_lite,
    meteor_lite_multi,
    msiou,
    parse_metrics,
    resolve_similarity,
    threshold_sweep,
)
from helpers import make_record, random_box, raw_prediction

B = (0.1, 0.1, 0.3, 0.3)
C = (0.5, 0.5, 0.4, 0.4)
W = (0.6, 0.0, 0.2, 0.1)


def fixed_point_set():
    captions = ["<p>A man</p> cuts <p>an onion</p> on a board",
                "<p>A woman</p> stirs soup in <p>a pot</p>",
                "two children play with <p>a red ball</p> outside",
                "<p>A chef</p> slices bread with a long knife"]
    out = []
    for i, cap in enumerate(captions):
        rng = random.Random(i)
        tracks = {0: {f: random_box(rng).as_list() for f in range(0, 6, 2)}}
        out.append(make_record(f"v{i}", cap, {k: {f: tuple(b) for f, b in v.items()} for k, v in tracks.items()},
                               num_frames=6))
    return out


def without_tracks(records):
    return [r.with_tracks([]) for r in records]


def test_cider_toy_corpus_oracle():
    refs = [["a man cuts an onion"], ["a woman stirs soup"]]
    scores = cider_d_scores(["a man cuts an apple", "a woman stirs rice"], refs)
    assert scores == pytest.approx([20 / 3, 55 / 12], abs=1e-6)
    assert cider_d(["a man cuts an apple", "a woman stirs rice"], refs) == pytest.approx(5.625, abs=1e-6)


def test_cider_identical_is_ten():
    caps = ["a man cuts an onion", "a woman stirs hot soup", "kids play ball in a park"]
    assert cider_d(caps, [[c] for c in caps]) == pytest.approx(10.0, abs=1e-9)


def test_cider_disjoint_item_is_zero():
    scores = cider_d_scores(["blue sky", "a woman stirs soup"], [["a man cuts an onion"], ["a woman stirs soup"]])
    assert scores[0] == 0.0


def test_cider_errors():
    with pytest.raises(ValueError):
        cider_d(["only one"], [["only one"]])
    with pytest.raises(ValueError):
        cider_d(["a b", "c d"], [["a b"], []])


def test_meteor_oracles():
    assert meteor_lite("a man cuts an onion", "a man cuts an onion") == pytest.approx(0.996, abs=1e-9)
    assert meteor_lite("the cat sat", "the cats sat") == pytest.approx(1 - 0.5 / 27, abs=1e-9)
    assert meteor_lite("blue sky", "a green field") == 0.0
    assert meteor_lite("", "anything") == 0.0


def test_meteor_fragmentation_and_multi():
    # two chunks of two: penalty 0.5 * (2/4)^3
    assert meteor_lite("c d a b", "a b c d") == pytest.approx(1 - 0.5 * 0.125, abs=1e-9)
    assert meteor_lite_multi("the cat sat", ["a dog ran", "the cat sat"]) == meteor_lite("the cat sat", "the cat sat")


@given(st.text(alphabet="abc ", max_size=30), st.text(alphabet="abc ", max_size=30))
def test_meteor_range(a, b):
    assert 0.0 <= meteor_lite(a, b) <= 1.0


def test_ap_derived_case():
    gt = make_record("v", "<p>a cup</p> and <p>a mug</p>", {0: {0: B}, 1: {0: C}}, num_frames=1)
    pred = make_record("v", "<p>a cup</p> and <p>a mug</p>", {0: {0: B}, 1: {0: W}}, num_frames=1,
                       scores={0: {0: 0.9}, 1: {0: 0.8}})
    assert ap50_video([pred], [gt]) == pytest.approx(0.5, abs=1e-9)


def test_average_precision_curve():
    assert average_precision([True, False], 2) == 0.5
    assert average_precision([False, True], 1) == 0.5
    assert average_precision([], 3) == 0.0
    with pytest.raises(ValueError):
        average_precision([True], 0)


def test_ap_is_one_to_one():
    gt = make_record("v", "<p>a cup</p>", {0: {0: B}}, num_frames=1)
    single = make_record("v", "<p>a cup</p>", {0: {0: B}}, num_frames=1)
    double = make_record("v", "<p>a cup</p> <p>a cup</p>", {0: {0: B}, 1: {0: B}}, num_frames=1)
    assert ap50_video([double], [gt]) <= ap50_video([single], [gt])
    assert ap50_video([double], [gt]) == 1.0  # the duplicate sits below the hit in the ranking
    late = make_record("v", "<p>a cup</p> <p>a cup</p>", {0: {0: B}, 1: {0: B}}, num_frames=1,
                       scores={0: {0: 0.1}})
    assert ap50_video([late], [gt]) == 1.0
    two_gt = make_record("v", "<p>a cup</p> <p>a mug</p>", {0: {0: B}, 1: {0: C}}, num_frames=1)
    # both predictions overlap the first GT only; the second cannot be credited again
    assert ap50_video([double], [two_gt]) == 0.5


def test_ap_excludes_videos_without_gt():
    gt = make_record("v", "<p>a cup</p>", {0: {0: B}}, num_frames=1)
    empty_gt = make_record("w", "nothing here", {}, num_frames=1)
    assert ap50_video([gt, empty_gt], [gt, empty_gt]) == 1.0
    assert ap50_video([empty_gt], [empty_gt]) == 0.0


def test_ap_rejects_bad_input():
    gt = make_record("v", "<p>a cup</p>", {0: {0: B}}, num_frames=1)
    with pytest.raises(ValueError):
        ap50_video([make_record("x", "<p>a cup</p>", {0: {0: B}}, num_frames=1)], [gt])
    with pytest.raises(ValueError):
        ap50_video([make_record("v", "<p>a cup</p>", {0: {3: B}}, num_frames=4)], [gt])


def test_phrase_aware_ap():
    gt = make_record("v", "<p>a cup</p>", {0: {0: B}}, num_frames=1)
    pred = make_record("v", "<p>a plate</p>", {0: {0: B}}, num_frames=1)
    assert ap50_video([pred], [gt]) == 1.0
    assert ap50_video([pred], [gt], phrase_aware=True) == 0.0


def test_recall_cases():
    gt = make_record("v", "<p>a knife</p> cuts <p>an onion</p>", {0: {0: B, 1: B}, 1: {0: C, 1: C}}, num_frames=2)
    half = make_record("v", "<p>a knife</p> cuts <p>an onion</p>", {0: {0: B, 1: B}}, num_frames=2)
    assert grounding_recall([half], [gt]) == 0.5
    wrong = make_record("v", "<p>the bowl</p> holds <p>a spoon</p>", {0: {0: B, 1: B}, 1: {0: C, 1: C}},
                        num_frames=2)
    assert grounding_recall([wrong], [gt]) == 0.0
    assert grounding_recall([gt], [gt]) == 1.0
    with pytest.raises(ValueError):
        grounding_recall([gt], [gt], sim_thresh=1.5)


def test_recall_uses_pluggable_similarity():
    gt = make_record("v", "<p>a knife</p>", {0: {0: B}}, num_frames=1)
    pred = make_record("v", "<p>a blade</p>", {0: {0: B}}, num_frames=1)
    calls = []

    def sim(a, b):
        calls.append((a, b))
        return 0.9

    assert grounding_recall([pred, ], [gt], similarity=sim) == 1.0
    assert calls == [("a blade", "a knife")]


def test_similarity_examples():
    assert default_phrase_similarity("a red onion", "a red onion") == 1.0
    assert default_phrase_similarity("a cup", "the cup") == 1.0
    assert default_phrase_similarity("a knife", "the bowl") == 0.0
    assert default_phrase_similarity("red onions", "a red onion") == 1.0
    assert default_phrase_similarity("a red onion", "a white onion") == pytest.approx(1 / 3)


def test_f1_cases():
    gt = make_record("v", "<p>a knife</p> cuts <p>an onion</p>", {0: {0: B}, 1: {0: C}}, num_frames=1)
    assert f1_entities([gt], [gt]) == f1_entities([gt], [gt]).__class__(1.0, 1.0, 1.0, 1.0)
    one_missed = make_record("v", "<p>a knife</p> cuts <p>an onion</p>", {0: {0: B}}, num_frames=1)
    assert f1_entities([one_missed], [gt]).f1_all == 0.5
    renamed = make_record("v", "<p>a spoon</p> stirs <p>a soup</p>", {0: {0: B}, 1: {0: C}}, num_frames=1)
    out = f1_entities([renamed], [gt])
    assert out.f1_all == 0.0 and out.f1_loc == 1.0
    assert out.f1_all_per_sent == 0.0 and out.f1_loc_per_sent == 1.0
    with pytest.raises(ValueError):
        f1_entities([gt.with_tracks([])], [gt.with_tracks([])])


def test_f1_ignores_unannotated_frames():
    gt = make_record("v", "<p>a knife</p>", {0: {0: B}}, num_frames=3)
    pred = make_record("v", "<p>a knife</p>", {0: {0: B, 1: W, 2: C}}, num_frames=3)
    assert f1_entities([pred], [gt]).f1_all == 1.0


def test_f1_iou_must_exceed_threshold():
    gt = make_record("v", "<p>a box</p>", {0: {0: (0.0, 0.0, 0.5, 0.5)}}, num_frames=1)
    # IoU exactly 0.5
    pred = make_record("v", "<p>a box</p>", {0: {0: (0.0, 0.0, 0.25, 0.5)}}, num_frames=1)
    assert f1_entities([pred], [gt]).f1_loc == 0.0
    assert ap50_video([pred], [gt]) == 1.0


def test_msiou_cases():
    gt = make_record("v", "<p>a dog</p> runs", {0: {0: B, 1: B}}, num_frames=2)
    half = make_record("v", "<p>a dog</p> runs", {0: {0: B}}, num_frames=2)
    assert msiou([gt], [gt]) == 1.0
    assert msiou([half], [gt]) == 0.5
    assert msiou([gt.with_tracks([])], [gt]) == 0.0
    two = make_record("v", "<p>a dog</p> chases <p>a cat</p>", {0: {0: B}, 1: {0: C}}, num_frames=2)
    with pytest.raises(ValueError):
        msiou([two], [two])


def test_msiou_uses_single_track_regardless_of_id():
    gt = make_record("v", "<p>a dog</p> runs", {0: {0: B, 1: B}}, num_frames=2)
    pred = gt.with_tracks([Track(0, (TrackEntry(0, BoundingBox(*B)), TrackEntry(1, BoundingBox(*B))))])
    assert msiou([pred], [gt]) == 1.0


def test_fixed_points():
    gts = fixed_point_set()
    report = evaluate(gts, gts, ALL_METRICS)
    for key in ("ap50", "recall", "f1_all", "f1_loc", "f1_all_per_sent", "f1_loc_per_sent", "msiou"):
        assert report.scores[key] == 1.0, key
    assert report.scores["cider"] == pytest.approx(10.0, abs=1e-9)
    assert report.scores["meteor_lite"] >= 0.99
    empty = evaluate(without_tracks(gts), gts, ALL_METRICS)
    for key in ("ap50", "recall", "f1_all", "f1_loc", "msiou"):
        assert empty.scores[key] == 0.0, key


def test_report_is_json_with_config_echo():
    gts = fixed_point_set()
    text = evaluate(gts, gts, ("ap50", "recall"), iou_thresh=0.6, sim_thresh=0.7).dumps()
    data = json.loads(text)
    assert data["config"]["iou_thresh"] == 0.6 and data["config"]["similarity"] == "builtin:jaccard"
    assert set(data["per_video"]["ap50"]) == {"v0", "v1", "v2", "v3"}
    assert any("meteor_lite" in note for note in data["config"]["notes"])


def test_parse_metrics():
    assert parse_metrics("ap50, msiou,ap50") == ("ap50", "msiou")
    with pytest.raises(ValueError):
        parse_metrics("bleu")


def noisy_predictions(gts, seed):
    rng = random.Random(seed)
    out = []
    for g in gts:
        tracks = []
        for t in g.tracks:
            entries = []
            for e in t.entries:
                if rng.random() < 0.2:
                    continue
                b = e.box if rng.random() < 0.5 else random_box(rng)
                entries.append(TrackEntry(e.frame_index, b, rng.random()))
            tracks.append(Track(t.phrase_id, tuple(entries)))
        out.append(g.with_tracks(tracks))
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_permutation_invariance(seed):
    gts = fixed_point_set()
    preds = noisy_predictions(gts, seed)
    base = evaluate(preds, gts, ALL_METRICS).scores
    order = list(range(len(gts)))
    random.Random(seed).shuffle(order)
    shuffled = evaluate([preds[i] for i in order], [gts[i] for i in reversed(order)], ALL_METRICS).scores
    for key, value in base.items():
        assert shuffled[key] == pytest.approx(value, abs=1e-12), key


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_recall_never_rises_with_iou_threshold(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    gts = fixed_point_set()
    preds = noisy_predictions(gts, seed)
    assert grounding_recall(preds, gts, iou_thresh=hi) <= grounding_recall(preds, gts, iou_thresh=lo)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_adding_a_correct_prediction_never_lowers_recall(seed):
    gts = fixed_point_set()
    preds = noisy_predictions(gts, seed)
    rng = random.Random(seed)
    k = rng.randrange(len(gts))
    g = gts[k]
    target = rng.choice([e for t in g.tracks for e in t.entries])
    extra = Track(max(p.id for p in g.phrases), (TrackEntry(target.frame_index, target.box),))
    texts = {p.id: p.text for p in g.phrases}
    owner = next(t.phrase_id for t in g.tracks if target in t.entries)
    more = list(preds)
    if texts[extra.phrase_id] != texts[owner]:
        extra = Track(owner, (TrackEntry(target.frame_index, target.box),))
    merged = {t.phrase_id: list(t.entries) for t in preds[k].tracks}
    merged.setdefault(extra.phrase_id, [])
    if all(e.frame_index != target.frame_index for e in merged[extra.phrase_id]):
        merged[extra.phrase_id].append(extra.entries[0])
    more[k] = preds[k].with_tracks([Track(pid, tuple(sorted(es, key=lambda e: e.frame_index)))
                                    for pid, es in sorted(merged.items())])
    assert grounding_recall(more, gts) >= grounding_recall(preds, gts)


def sweep_fixture():
    gt = make_record("v", "<p>a knife</p> cuts <p>an onion</p>",
                     {0: {2: B, 3: B}, 1: {0: C, 1: C, 2: C, 3: C}}, num_frames=4)
    raw = raw_prediction("v", {0: [0.2, 0.3, 0.9, 0.8], 1: [0.4, 0.9, 0.9, 0.9]},
                         {0: [BoundingBox(*W)] * 2 + [BoundingBox(*B)] * 2, 1: [BoundingBox(*C)] * 4})
    return raw, gt


def test_threshold_sweep_fixture():
    raw, gt = sweep_fixture()
    rows = threshold_sweep([raw], [gt], [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    assert [r.boxes_emitted for r in rows] == [8, 8, 8, 7, 6, 5]
    assert rows[0].ap50 == pytest.approx(0.75, abs=1e-12)
    assert rows[-1].ap50 == pytest.approx(5 / 6, abs=1e-12)
    assert rows[0].recall == 1.0 and rows[-1].recall == pytest.approx(5 / 6)
    removed_true = 1 / 6
    assert rows[-1].recall >= rows[0].recall - removed_true - 1e-12


def test_threshold_sweep_score_ranking_cannot_improve():
    raw, gt = sweep_fixture()
    rows = threshold_sweep([raw], [gt], [0.0, 0.5], rank_by_score=True)
    assert rows[1].ap50 <= rows[0].ap50


def test_threshold_sweep_errors():
    raw, gt = sweep_fixture()
    with pytest.raises(ValueError):
        threshold_sweep([raw], [gt], [0.5, 0.1])
    with pytest.raises(ValueError):
        threshold_sweep([dataclasses.replace(raw, clip_id="zz")], [gt], [0.1])


def test_resolve_similarity():
    assert resolve_similarity("builtin:jaccard") is default_phrase_similarity
    assert isinstance(resolve_similarity("http:http://127.0.0.1:1/sim"), HttpSimilarity)
    assert resolve_similarity("http://127.0.0.1:1/sim").endpoint == "http://127.0.0.1:1/sim"
    with pytest.raises(ValueError):
        resolve_similarity("word2vec")


class _SimHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        score = 1.5 if body["a"] == body["b"] else 0.25
        data = json.dumps({"score": score}).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


def test_http_similarity_against_stub():
    srv = ThreadingHTTPServer(("127.0.0.1", 0), _SimHandler)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    try:
        sim = resolve_similarity(f"http:http://127.0.0.1:{srv.server_port}/score")
        assert sim("a cup", "a cup") == 1.0
        assert sim("a cup", "a mug") == 0.25
        sim.close()
    finally:
        srv.shutdown()
        srv.server_close()


def test_http_similarity_bad_payload():
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1})))
    with pytest.raises(ValueError):
        HttpSimilarity("http://sim.test", client=client)("a", "b")
