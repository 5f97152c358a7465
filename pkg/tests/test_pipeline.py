"""End-to-end encoder/decoder behavior on synthetic sequences."""

import numpy as np
import pytest

from fbv.container import ContainerError, budget_of, read_stream
from fbv.core import FbvError, Frame, VideoSequence
from fbv.pipeline import (QUALITY_LADDER, EncoderConfig, TimingReport,
                          analyze_bytes, decode_bytes, decode_frame,
                          decode_stream, encode, rd_sweep, sweep_csv)
from fbv.residual import QualityPoint

from conftest import moving_square_video, smooth_texture

FAST = dict(init_frames=8)


@pytest.fixture(scope="module")
def sq_video():
    return moving_square_video(n=24)


@pytest.fixture(scope="module")
def sq_result(sq_video):
    return encode(sq_video, EncoderConfig(**FAST))


def _step_video(h=48, w=48, n=40, shifts=((12, -45), (24, 45))):
    """Static scene whose global brightness jumps at the given frames."""
    bg = smooth_texture(h, w, seed=6)
    frames = []
    level = 0
    table = dict(shifts)
    for t in range(n):
        level = table.get(t, level)
        planes = np.clip(bg.astype(np.int64) + level, 0, 255).astype(np.uint8)
        frames.append(Frame(planes, t))
    return VideoSequence(tuple(frames), 25, 1)


class TestEncodeBasics:
    def test_byte_determinism(self, sq_video):
        a = encode(sq_video, EncoderConfig(**FAST))
        b = encode(sq_video, EncoderConfig(**FAST))
        assert a.data == b.data

    def test_closed_loop_is_bit_exact(self, sq_video, sq_result):
        dec = decode_bytes(sq_result.data, enhance_output=False)
        assert len(dec.pre_enhance) == len(sq_result.recon)
        for got, want in zip(dec.pre_enhance, sq_result.recon):
            assert got.frame_index == want.frame_index
            assert np.array_equal(got.planes, want.planes)

    def test_gate_trace_covers_every_frame(self, sq_video, sq_result):
        assert len(sq_result.gate_trace) == len(sq_video.frames)
        assert all(0.0 <= s <= 1.0 for s in sq_result.gate_trace)

    def test_quality_report_is_sane(self, sq_result):
        q = sq_result.quality
        assert q is not None
        assert q.psnr_mean > 25.0
        assert 0.8 < q.ms_ssim_mean <= 1.0
        assert 0.0 < q.bpp < 8.0

    def test_header_carries_decode_parameters(self, sq_video):
        cfg = EncoderConfig(delta_q=2.5, levels=3, gamma=0.97, **FAST)
        result = encode(sq_video, cfg)
        h = result.stream.header
        assert h.levels == 3
        assert h.delta_fp == 640          # 2.5 * 256
        assert h.gamma_fp == 9700
        assert h.quality == QualityPoint(2.5, 3)
        assert (h.width, h.height) == (64, 64)
        assert h.frame_count == 24

    def test_too_few_frames_for_initialization(self, sq_video):
        with pytest.raises(FbvError, match="initialization"):
            encode(sq_video, EncoderConfig(init_frames=500))

    def test_moving_object_produces_foreground_records(self, sq_result):
        assert len(sq_result.stream.foregrounds) > 0
        assert sq_result.budget.bits_fg_motion > 0
        assert sq_result.budget.bits_fg_residual > 0


@pytest.fixture(scope="module")
def static_result(static_clip):
    return encode(static_clip, EncoderConfig(**FAST))


class TestStaticScene:

    def test_stream_shape(self, static_clip, static_result):
        stream = static_result.stream
        n = len(static_clip.frames)
        assert len(stream.templates) == 1
        assert stream.templates[0].anchor
        assert len(stream.foregrounds) == 0
        assert stream.segments == ((0, n - 1),)

    def test_all_bits_are_background(self, static_result):
        b = static_result.budget
        assert b.bits_fg_residual == 0
        assert b.bits_fg_motion == 0
        assert b.bits_bg_residual > 0

    def test_decode_replays_the_template(self, static_result):
        dec = decode_bytes(static_result.data)
        first = dec.video.frames[0].planes
        for f in dec.video.frames[1:]:
            assert np.array_equal(f.planes, first)


class TestDecode:
    def test_output_and_pre_enhance_agree_when_disabled(self, sq_result):
        dec = decode_bytes(sq_result.data, enhance_output=False)
        for a, b in zip(dec.video.frames, dec.pre_enhance):
            assert np.array_equal(a.planes, b.planes)

    def test_enhance_changes_foreground_frames_only(self, sq_result):
        plain = decode_bytes(sq_result.data, enhance_output=False)
        nice = decode_bytes(sq_result.data, enhance_output=True)
        fg_frames = {f.frame_no for f in sq_result.stream.foregrounds}
        changed = {
            t for t, (a, b) in enumerate(zip(plain.video.frames, nice.video.frames))
            if not np.array_equal(a.planes, b.planes)}
        assert changed <= fg_frames
        assert changed        # feathering must do something on this clip

    def test_reference_mismatch_rejected(self, sq_video, sq_result):
        short = VideoSequence(sq_video.frames[:-1], 25, 1)
        with pytest.raises(FbvError, match="reference frame count"):
            decode_bytes(sq_result.data, reference=short)

    def test_frame_indices_are_sequential(self, sq_result):
        dec = decode_bytes(sq_result.data)
        for t, f in enumerate(dec.video.frames):
            assert f.frame_index == t


class TestRandomAccess:
    def test_matches_sequential_everywhere(self, sq_result):
        stream = read_stream(sq_result.data)
        for enh in (False, True):
            _, seq = decode_stream(stream, enhance_output=enh)
            for t in range(0, stream.header.frame_count, 5):
                got = decode_frame(stream, t, enhance_output=enh)
                assert np.array_equal(got.planes, seq[t].planes), (enh, t)

    def test_out_of_range_frame(self, sq_result):
        stream = read_stream(sq_result.data)
        with pytest.raises(ContainerError, match="out of range"):
            decode_frame(stream, stream.header.frame_count)

    def test_across_anchor_restart(self):
        # brightness steps force three templates; cadence 2 makes the third
        # an anchor, so mid-bracket seeks must rebuild the earlier chain
        video = _step_video()
        cfg = EncoderConfig(anchor_interval=2, learning_rate=0.2, **FAST)
        result = encode(video, cfg)
        templates = result.stream.templates
        assert len(templates) == 3
        assert [t.anchor for t in templates] == [True, False, True]
        stream = read_stream(result.data)
        _, seq = decode_stream(stream)
        t1, t2 = templates[1].frame_no, templates[2].frame_no
        probes = {t1, (t1 + t2) // 2, t2, 0, len(video.frames) - 1}
        for t in probes:
            got = decode_frame(stream, t)
            assert np.array_equal(got.planes, seq[t].planes), t


class TestConfig:
    def test_gamma_bounds(self):
        with pytest.raises(ValueError):
            EncoderConfig(gamma=0.0)
        with pytest.raises(ValueError):
            EncoderConfig(gamma=1.0)

    def test_pinned_fields(self):
        with pytest.raises(ValueError, match="block_size is fixed"):
            EncoderConfig(block_size=16)
        with pytest.raises(ValueError, match="search_range is fixed"):
            EncoderConfig(search_range=8)

    def test_component_validation_happens_at_construction(self):
        with pytest.raises(ValueError):
            EncoderConfig(levels=0)
        with pytest.raises(ValueError):
            EncoderConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            EncoderConfig(majority_votes=10)
        with pytest.raises(ValueError):
            EncoderConfig(feather_band=17)

    def test_quality_ladder(self):
        assert QUALITY_LADDER[1] == QualityPoint(8.0, 1)
        assert QUALITY_LADDER[4] == QualityPoint(1.0, 4)
        cfg = EncoderConfig.from_quality(2, init_frames=8)
        assert (cfg.delta_q, cfg.levels) == (4.0, 2)
        assert cfg.init_frames == 8
        with pytest.raises(ValueError, match="quality point"):
            EncoderConfig.from_quality(9)


class TestTiming:
    def test_report_rows_and_totals(self, sq_video, sq_result):
        t = sq_result.timing
        assert t.frame_count == len(sq_video.frames)
        assert t.encode_total_s > 0
        assert t.decode_total_s > 0
        labels = [name for name, _ in t.rows()]
        assert labels == ["separation", "background compression",
                          "foreground compression", "two-stage decoding",
                          "motion estimation", "motion compensation",
                          "residual codec"]
        # exclusive stages fit inside the encode wall total
        n = t.frame_count
        stage_s = (t.separation_ms + t.background_ms + t.foreground_ms) * n / 1000.0
        assert stage_s <= t.encode_total_s

    def test_negative_timing_rejected(self):
        with pytest.raises(ValueError):
            TimingReport(-1, 0, 0, 0, 0, 0, 0, 0, 0, 10)


class TestAnalyze:
    def test_report_contents(self, sq_result):
        report = analyze_bytes(sq_result.data)
        assert report.budget == budget_of(sq_result.stream)
        n = sq_result.stream.header.frame_count
        want_bpp = 8.0 * len(sq_result.data) / (64 * 64 * n)
        assert report.bpp == pytest.approx(want_bpp)
        text = report.text
        for needle in ("template", "fgframe", "segments:", "BR", "FR", "FMV",
                       "bpp:"):
            assert needle in text


class TestRdSweep:
    def test_two_ladder_points(self, sq_video):
        rows = rd_sweep(sq_video, [1, 4], EncoderConfig(**FAST))
        assert len(rows) == 2
        assert rows[0].bpp < rows[1].bpp
        assert rows[0].psnr_db <= rows[1].psnr_db
        assert rows[0].delta_q == 8.0 and rows[0].levels == 1
        assert rows[1].delta_q == 1.0 and rows[1].levels == 4

    def test_needs_two_points(self, sq_video):
        with pytest.raises(ValueError, match="at least two"):
            rd_sweep(sq_video, [2], EncoderConfig(**FAST))

    def test_unknown_ladder_point(self, sq_video):
        with pytest.raises(ValueError, match="ladder"):
            rd_sweep(sq_video, [1, 7], EncoderConfig(**FAST))

    def test_csv_shape(self, sq_video):
        rows = rd_sweep(sq_video, [QualityPoint(8.0, 1), QualityPoint(4.0, 2)],
                        EncoderConfig(**FAST))
        text = sweep_csv(rows)
        lines = text.strip().splitlines()
        assert lines[0] == "delta_q,levels,bpp,psnr_db,ms_ssim,fb_mixture"
        assert len(lines) == 3
        first = lines[1].split(",")
        assert float(first[0]) == 8.0
        assert int(first[1]) == 1
