"""Acceptance criteria for the toolkit, one test per criterion.

Each test prints a single [PASS]/[FAIL] verdict line. The oracles here are
deliberately independent re-derivations (brute-force numpy, transcribed
formulas, draw-protocol replays), not calls back into the code under test.
"""
import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from eadt import (
    BinaryMask,
    Detection,
    DetectionSet,
    ProbMap,
    apply_seg_postprocess,
    average_precision,
    bce_loss,
    combined_loss,
    dice,
    evaluate_segmentation,
    jaccard,
    mean_ap,
    pixel_ensemble,
    read_detections,
    read_mask_tensor,
    soft_dice_loss,
    soft_jaccard_loss,
    split_sequential,
    write_detections,
    write_mask_tensor,
)
from eadt import augment, cli
from eadt.detfuse import FusionConfig, fuse_detections, tune_fusion
from eadt.metrics import f2_pixel, pixel_precision
from eadt.segpost import min_area_from_dataset, tune_triple_threshold

from conftest import grid_boxes, random_detections, random_mask, random_prob


@contextmanager
def criterion(num: int, text: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {num}: {text}")
        raise
    print(f"[PASS] criterion {num}: {text}")


def _oracle_gated_binarize(prob64, min_thresh, max_thresh, areas):
    """Line-by-line transcription of the gated binarization."""
    out = np.zeros(prob64.shape, dtype=bool)
    for c in range(prob64.shape[0]):
        if max_thresh is not None:
            if int((prob64[c] > max_thresh).sum()) < areas[c]:
                continue
        out[c] = prob64[c] > min_thresh
    return out


def test_c1_gated_binarization_matches_transcription():
    with criterion(1, "gated binarization equals its transcription oracle on "
                      "200 random maps and configs in under 10 s"):
        rng = np.random.default_rng(11)
        spent = 0.0
        for _ in range(200):
            prob = random_prob(rng, 5, 64, 64)
            min_t = float(rng.uniform(0.0, 1.0))
            max_t = (None if rng.random() < 0.2
                     else float(rng.uniform(min_t, 1.0)))
            areas = tuple(int(a) for a in rng.integers(0, 60, 5))
            started = time.perf_counter()
            got = apply_seg_postprocess(prob, min_t, max_t, areas)
            spent += time.perf_counter() - started
            p64 = prob.data.astype(np.float64)
            want = _oracle_gated_binarize(p64, min_t, max_t, areas)
            assert np.array_equal(got.data, want)
            assert not np.any(got.data & ~(p64 > min_t))
        assert spent < 10.0, f"took {spent:.2f}s"


def test_c2_area_gate_removes_false_positives():
    with criterion(2, "the area gate strictly improves precision on a "
                      "small-false-positive dataset"):
        h = w = 64
        bg = np.full((1, h, w), 0.05, dtype=np.float32)
        pa = bg.copy()
        pa[0, 10:30, 10:30] = 0.9           # 400 px true blob
        ga = np.zeros((1, h, w), dtype=bool)
        ga[0, 10:30, 10:30] = True
        pb = bg.copy()
        pb[0, 5:10, 5:11] = 0.55            # 30 px spurious blob
        gb = np.zeros((1, h, w), dtype=bool)
        preds = [ProbMap(pa), ProbMap(pb)]
        gts = [BinaryMask(ga), BinaryMask(gb)]

        best, table = tune_triple_threshold(preds, gts, min_area_thresh=(50,),
                                            objective="precision")
        by_cell = {(c.min_thresh, c.max_thresh): c.score for c in table}
        for mn in (0.4, 0.5):
            for mx in (0.6, 0.7, 0.8):
                assert by_cell[(mn, mx)] > by_cell[(mn, None)]
        assert best.max_thresh == 0.6 and best.min_thresh == 0.4
        assert best.score == max(c.score for c in table)

        plain = [apply_seg_postprocess(p, best.min_thresh, None, ())
                 for p in preds]
        tuned = [apply_seg_postprocess(p, best.min_thresh, best.max_thresh,
                                       (50,)) for p in preds]
        prec_plain = evaluate_segmentation(plain, gts).mean["precision"]
        prec_tuned = evaluate_segmentation(tuned, gts).mean["precision"]
        assert prec_tuned == 1.0 and prec_tuned > prec_plain


def _replay_draws(n, w, h, seed):
    """Re-derive the shuffle and rectangle from the documented draw order."""
    rng = augment.RandomSource(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.randint(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    lam = rng.random()
    rx = rng.random() * w
    ry = rng.random() * h
    r = math.sqrt(1.0 - lam)
    half_w, half_h = r * w / 2.0, r * h / 2.0
    x1 = math.floor(max(rx - half_w, 0.0) + 0.5)
    x2 = math.floor(min(rx + half_w, float(w)) + 0.5)
    y1 = math.floor(max(ry - half_h, 0.0) + 0.5)
    y2 = math.floor(min(ry + half_h, float(h)) + 0.5)
    return perm, (x1, y1, x2, y2)


def _replay_cutmix(batch, seed):
    """Independent re-derivation of the mixing output from the draw protocol."""
    h, w = batch[0][0].data.shape[1:]
    perm, (x1, y1, x2, y2) = _replay_draws(len(batch), w, h, seed)
    out = []
    for i, (img, mask) in enumerate(batch):
        partner_img, partner_mask = batch[perm[i]]
        a = img.data.copy()
        b = mask.data.copy()
        a[:, y1:y2, x1:x2] = partner_img.data[:, y1:y2, x1:x2]
        b[:, y1:y2, x1:x2] = partner_mask.data[:, y1:y2, x1:x2]
        out.append((a, b))
    return out


def test_c3_seeded_mixing_is_reproducible():
    with criterion(3, "mixing matches its draw-protocol oracle for 50 seeds "
                      "and every output pixel has exactly one source"):
        rng = np.random.default_rng(33)
        pair = [(random_prob(rng, 1, 8, 8), random_mask(rng, 1, 8, 8))
                for _ in range(2)]
        for seed in range(50):
            got = augment.cutmix(pair, augment.RandomSource(seed))
            want = _replay_cutmix(pair, seed)
            for (gi, gm), (wi, wm) in zip(got, want):
                assert np.array_equal(gi.data.view(np.uint32),
                                      wi.view(np.uint32))
                assert np.array_equal(gm.data, wm)

        # provenance: each pixel comes from own or partner sample, and the
        # image and the mask always take it from the same one
        for _ in range(500):
            n = int(rng.integers(2, 5))
            batch = [(random_prob(rng, 1, 8, 8), random_mask(rng, 1, 8, 8))
                     for _ in range(n)]
            seed = int(rng.integers(0, 2 ** 63))
            got = augment.cutmix(batch, augment.RandomSource(seed))
            perm, (x1, y1, x2, y2) = _replay_draws(n, 8, 8, seed)
            inside = np.zeros((8, 8), dtype=bool)
            inside[y1:y2, x1:x2] = True
            for i, (img, mask) in enumerate(batch):
                partner_img, partner_mask = batch[perm[i]]
                gi, gm = got[i]
                assert np.array_equal(gi.data[:, inside],
                                      partner_img.data[:, inside])
                assert np.array_equal(gi.data[:, ~inside],
                                      img.data[:, ~inside])
                assert np.array_equal(gm.data[:, inside],
                                      partner_mask.data[:, inside])
                assert np.array_equal(gm.data[:, ~inside],
                                      mask.data[:, ~inside])

        words = [augment.derive_seed(master, i)
                 for master in range(500) for i in range(10)]
        assert len(set(words)) == len(words)


def test_c4_analytic_gradients_match_finite_differences():
    with criterion(4, "analytic loss gradients match central finite "
                      "differences to 1e-5"):
        rng = np.random.default_rng(44)

        def _combo(terms):
            def fn(p_, t_, with_grad=False):
                return combined_loss(p_, t_, terms, with_grad=with_grad)
            return fn

        losses = (bce_loss, soft_dice_loss, soft_jaccard_loss,
                  _combo({"bce": 0.5, "dice": 1.0}),
                  _combo({"bce": 2.0, "jaccard": 0.25}),
                  _combo({"bce": 1.0, "dice": 1.0, "jaccard": 1.0}))
        h = 1e-5
        for _ in range(20):
            p = rng.uniform(0.2, 0.8, (5, 8, 8)).astype(np.float32)
            t = BinaryMask(rng.random((5, 8, 8)) < 0.5)
            for fn in losses:
                ga = fn(ProbMap(p), t, with_grad=True).gradient
                for _ in range(5):
                    c = int(rng.integers(5))
                    i = int(rng.integers(8))
                    j = int(rng.integers(8))
                    v = float(p[c, i, j])
                    vp, vm = np.float32(v + h), np.float32(v - h)
                    delta = float(vp) - float(vm)
                    ap = p.copy()
                    ap[c, i, j] = vp
                    am = p.copy()
                    am[c, i, j] = vm
                    fd = (fn(ProbMap(ap), t).value
                          - fn(ProbMap(am), t).value) / delta
                    rel = abs(fd - ga[c, i, j]) / max(
                        abs(fd), abs(ga[c, i, j]), 1e-8)
                    assert rel < 1e-5


def _oracle_iou(b1, b2):
    ix = max(0.0, min(b1[2], b2[2]) - max(b1[0], b2[0]))
    iy = max(0.0, min(b1[3], b2[3]) - max(b1[1], b2[1]))
    inter = ix * iy
    if inter <= 0.0:
        return 0.0
    a1 = (b1[2] - b1[0]) * (b1[3] - b1[1])
    a2 = (b2[2] - b2[0]) * (b2[3] - b2[1])
    return inter / (a1 + a2 - inter)


def _oracle_ap(pred_rows, gt_rows, thresh):
    """Transcribed AP: greedy best-IoU matching, then for every true
    positive the best later precision, summed over recall steps of 1/n."""
    order = sorted(range(len(pred_rows)), key=lambda i: -pred_rows[i][0])
    matched = set()
    flags = []
    for i in order:
        conf, img, box = pred_rows[i]
        best_j, best_iou = None, 0.0
        for j, (gimg, gbox) in enumerate(gt_rows):
            if gimg != img or j in matched:
                continue
            v = _oracle_iou(box, gbox)
            if v >= thresh and v > best_iou:
                best_j, best_iou = j, v
        if best_j is None:
            flags.append(False)
        else:
            matched.add(best_j)
            flags.append(True)
    if not gt_rows:
        return 0.0
    precisions = []
    tp = 0
    for k, flag in enumerate(flags, start=1):
        tp += flag
        precisions.append(tp / k)
    ap = 0.0
    for k, flag in enumerate(flags):
        if flag:
            ap += max(precisions[k:]) / len(gt_rows)
    return ap


def test_c5_metric_identities_and_exhaustive_ap():
    with criterion(5, "pixel metrics match brute-force recounts and AP "
                      "matches a transcribed oracle on every palette subset"):
        rng = np.random.default_rng(55)
        for _ in range(1000):
            a = random_mask(rng, 2, 12, 12, density=float(rng.uniform(0.1, 0.9)))
            b = random_mask(rng, 2, 12, 12, density=float(rng.uniform(0.1, 0.9)))
            inter = np.logical_and(a.data, b.data).sum(axis=(1, 2))
            sa = a.data.sum(axis=(1, 2))
            sb = b.data.sum(axis=(1, 2))
            want_dice = [1.0 if sa[k] + sb[k] == 0
                         else 2.0 * int(inter[k]) / int(sa[k] + sb[k])
                         for k in range(2)]
            want_jac = [1.0 if sa[k] + sb[k] - inter[k] == 0
                        else int(inter[k]) / int(sa[k] + sb[k] - inter[k])
                        for k in range(2)]
            got_dice = dice(a, b, per_class=True)
            got_jac = jaccard(a, b, per_class=True)
            assert list(got_dice) == want_dice
            assert list(got_jac) == want_jac
            for d, j in zip(got_dice, got_jac):
                assert abs(d - 2.0 * j / (1.0 + j)) < 1e-12
            tp = int(inter.sum())
            fp = int(sa.sum()) - tp
            fn = int(sb.sum()) - tp
            p = 1.0 if tp + fp == 0 else tp / (tp + fp)
            r = 1.0 if tp + fn == 0 else tp / (tp + fn)
            want_f2 = 0.0 if 4.0 * p + r == 0.0 else 5.0 * p * r / (4.0 * p + r)
            assert f2_pixel(a, b) == want_f2
            assert pixel_precision(a, b) == p

        gt_palette = [(0.0, 0.0, 10.0, 10.0), (20.0, 0.0, 30.0, 10.0),
                      (40.0, 0.0, 50.0, 10.0)]
        pred_palette = [(0.0, 1.0, 10.0, 10.0), (20.0, 6.0, 30.0, 10.0),
                        (0.0, 4.0, 10.0, 10.0), (60.0, 0.0, 70.0, 10.0)]
        confs = (0.9, 0.7, 0.9, 0.5)
        for thresh in (0.5, 0.65):
            for pm in range(16):
                pred_idx = [i for i in range(4) if pm >> i & 1]
                for gm in range(1, 8):
                    gt_idx = [i for i in range(3) if gm >> i & 1]
                    preds = [DetectionSet("im0", tuple(
                        Detection(0, *pred_palette[i], confs[i])
                        for i in pred_idx))]
                    gts = [DetectionSet("im0", tuple(
                        Detection(0, *gt_palette[i], 1.0) for i in gt_idx))]
                    got = average_precision(preds, gts, class_id=0,
                                            iou_thresh=thresh)
                    want = _oracle_ap(
                        [(confs[i], "im0", pred_palette[i]) for i in pred_idx],
                        [("im0", gt_palette[i]) for i in gt_idx], thresh)
                    assert got.ap == pytest.approx(want, abs=1e-12)
                    result = mean_ap(preds, gts, iou_thresh=thresh)
                    assert result.mean == got.ap


def test_c6_fusion_identity_and_grid():
    with criterion(6, "fusing disjoint boxes is the identity, duplicates cap "
                      "at confidence 1.0, and the default grid has 63 cells"):
        rng = np.random.default_rng(66)
        cfg = FusionConfig(0.5, 0.0, (1.0,))
        for _ in range(200):
            boxes = grid_boxes(rng, int(rng.integers(2, 9)))
            fused = fuse_detections([DetectionSet("im", tuple(boxes))], cfg)
            assert fused.boxes == tuple(sorted(boxes,
                                               key=lambda b: -b.confidence))

        twin = Detection(0, 0.0, 0.0, 10.0, 10.0, 0.6)
        fused = fuse_detections(
            [DetectionSet("im", (twin,)), DetectionSet("im", (twin,))],
            FusionConfig(0.5, 0.5, (1.0, 1.0)))
        assert len(fused.boxes) == 1
        assert fused.boxes[0].confidence == 1.0
        assert fused.boxes[0].x2 == pytest.approx(10.0)

        gts, per_model = [], [[], [], []]
        for i in range(4):
            base = grid_boxes(rng, 6)
            gts.append(DetectionSet(f"im{i}", tuple(
                Detection(b.class_id, b.x1, b.y1, b.x2, b.y2, 1.0)
                for b in base)))
            for m in range(3):
                noisy = tuple(
                    Detection(b.class_id,
                              b.x1 + float(rng.uniform(-1, 1)),
                              b.y1 + float(rng.uniform(-1, 1)),
                              b.x2 + float(rng.uniform(-1, 1)),
                              b.y2 + float(rng.uniform(-1, 1)),
                              float(rng.uniform(0.45, 1.0)))
                    for b in base)
                per_model[m].append(DetectionSet(f"im{i}", noisy))
        best_cfg, table = tune_fusion(per_model, gts)
        assert len(table) == 63
        assert all(0.0 <= c.score <= 1.0 for c in table)
        top = max(c.score for c in table)
        assert next(c.config for c in table if c.score == top) == best_cfg
        again_cfg, again_table = tune_fusion(per_model, gts)
        assert again_cfg == best_cfg and again_table == table


def test_c7_percentile_area_thresholds():
    with criterion(7, "percentile area thresholds equal the nearest-rank "
                      "oracle and grow with the percentile"):
        rng = np.random.default_rng(77)
        for _ in range(100):
            num_classes = int(rng.integers(1, 5))
            masks = []
            for _ in range(int(rng.integers(3, 20))):
                arr = np.zeros((num_classes, 20, 20), dtype=bool)
                for c in range(num_classes):
                    if rng.random() < 0.7:
                        area = int(rng.integers(1, 301))
                        arr[c].reshape(-1)[:area] = True
                masks.append(BinaryMask(arr))
            pct = float(rng.choice([1.0, 2.5, 10.0, 37.5, 50.0, 99.0]))
            got = min_area_from_dataset(masks, percentile=pct)
            for c in range(num_classes):
                areas = sorted(int(m.data[c].sum()) for m in masks
                               if int(m.data[c].sum()) > 0)
                if not areas:
                    want = 0
                else:
                    want = areas[math.ceil(pct / 100.0 * len(areas)) - 1]
                assert int(got[c]) == want
            ladder = [min_area_from_dataset(masks, percentile=p)
                      for p in (1.0, 2.5, 10.0, 25.0, 50.0, 75.0, 99.0)]
            for lo, hi in zip(ladder, ladder[1:]):
                assert all(int(a) <= int(b) for a, b in zip(lo, hi))


def test_c8_file_formats_round_trip(tmp_path):
    with criterion(8, "tensor and detection files round-trip byte-exactly "
                      "and sequential splits cut at the required sizes"):
        rng = np.random.default_rng(88)
        for k in range(100):
            c = int(rng.integers(1, 6))
            h = int(rng.integers(1, 41))
            w = int(rng.integers(1, 41))
            tensor = (random_prob(rng, c, h, w) if k % 2 == 0
                      else random_mask(rng, c, h, w))
            first = tmp_path / "first.eadt"
            second = tmp_path / "second.eadt"
            write_mask_tensor(first, tensor)
            loaded = read_mask_tensor(first)
            write_mask_tensor(second, loaded)
            assert first.read_bytes() == second.read_bytes()
            if k % 2 == 0:
                assert np.array_equal(loaded.data.view(np.uint32),
                                      tensor.data.view(np.uint32))
            else:
                assert np.array_equal(loaded.data, tensor.data)
        for k in range(20):
            sets = [random_detections(rng, f"im{i}") for i in range(5)]
            path = tmp_path / "dets.json"
            write_detections(path, sets)
            assert read_detections(path) == sets

        for total, counts in ((643, (474, 99, 70)), (2531, (2200, 232, 99))):
            ids = [f"case_{i:04d}" for i in range(total)]
            manifest = split_sequential(ids, counts)
            assert manifest.counts() == {"train": counts[0],
                                         "validation": counts[1],
                                         "holdout": counts[2]}
            assert manifest.subset_ids("train") == ids[:counts[0]]
            assert manifest.subset_ids("holdout") == ids[total - counts[2]:]
            assert [i for i, _ in manifest.entries] == ids


def _norm_report(path, run_dir):
    text = path.read_text(encoding="utf-8").replace(str(run_dir), "RUN")
    doc = json.loads(text)
    doc.pop("wall_time_s")
    return doc


def test_c9_cli_pipeline_is_deterministic(tmp_path):
    with criterion(9, "rerunning the CLI pipeline writes byte-identical "
                      "artifacts and equal reports modulo wall time"):
        rng = np.random.default_rng(99)
        shared = tmp_path / "shared"
        shared.mkdir()
        inputs = []
        for i in range(3):
            p = shared / f"model{i}.eadt"
            write_mask_tensor(p, random_prob(rng, 2, 24, 24))
            inputs.append(str(p))
        artifacts = []
        reports = []
        for name in ("run1", "run2"):
            run_dir = tmp_path / name
            run_dir.mkdir()
            fused = run_dir / "fused.eadt"
            mask = run_dir / "mask.eadt"
            assert cli.main(["ensemble-seg", "--inputs", *inputs,
                             "--out", str(fused)]) == 0
            assert cli.main(["triple-threshold", "--in", str(fused),
                             "--out", str(mask), "--min-thresh", "0.4",
                             "--max-thresh", "0.7", "--min-area", "5", "5"]) == 0
            artifacts.append((fused.read_bytes(), mask.read_bytes()))
            reports.append((
                _norm_report(run_dir / "fused.eadt.report.json", run_dir),
                _norm_report(run_dir / "mask.eadt.report.json", run_dir)))
        assert artifacts[0] == artifacts[1]
        assert reports[0] == reports[1]
        fused_lib = pixel_ensemble([read_mask_tensor(p) for p in inputs])
        masked_lib = apply_seg_postprocess(fused_lib, 0.4, 0.7, (5, 5))
        assert np.array_equal(
            read_mask_tensor(tmp_path / "run1" / "mask.eadt").data,
            masked_lib.data)
