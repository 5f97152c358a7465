"""End-to-end encoder and decoder orchestration.

The encoder runs two passes over the input. Pass one trains the pixel
mixture model on the first init_frames frames and admits the post-training
background estimate as the first (anchor) template at frame 0. Pass two
revisits every frame from 0 with the model state carried forward: each
frame is separated into background estimate plus foreground points, the
estimate is gated against the current template (luma MS-SSIM below gamma
admits a new template), the points grow into grid-aligned regions, and the
union of the previous and current frame's regions is coded by block flow
plus a transformed residual against the motion-compensated previous
*reconstructed* foreground. Frames with no regions fall into background
segments and reset the foreground reference, so every contiguous run of
foreground records starts from a zero reference.

The decoder mirrors the loop exactly. Backgrounds come from linear
interpolation between the bracketing templates, foregrounds from the same
closed-loop warp + residual chain, composited through the region mask and
optionally feathered. Feathering never enters the prediction loop, so the
pre-enhancement reconstructions on both sides are bit-identical. Both
directions are pure functions of (bytes, options): encoding the same input
twice yields byte-identical streams.
"""

from __future__ import annotations

import io
import time
from bisect import bisect_right
from dataclasses import dataclass, fields, replace

import numpy as np

from .bgmodel import GmmParams, background_estimate, gmm_init, gmm_update
from .bgtemplate import (BackgroundTemplate, TemplateChain, decode_template,
                         interpolated_background)
from .container import (FbvStream, ForegroundRecord, RetrievalPlan, StreamHeader,
                        TemplateRecord, build_segments, budget_of, lookup,
                        read_stream, write_stream)
from .core import FbvError, Frame, VideoSequence
from .decode import DEFAULT_BAND, CompositeFrame, composite, enhance
from .entropy import BitBudgetReport
from .fgregion import FgParams, RegionSet, combine_regions, fp
from .metrics import (QualityReport, bpp, fb_mixture, laplacian_sharpness,
                      ms_ssim, psnr, rd_objective)
from .motion import (BLOCK, SEARCH_RANGE, decode_flow, encode_flow,
                     estimate_flow, predict, warp)
from .residual import QualityPoint, decode_residual, encode_residual, \
    reconstruct_foreground

GAMMA_SCALE = 10_000

# rate ladder used by the CLI and the sweeps: 1 coarsest .. 4 finest
QUALITY_LADDER = {
    1: QualityPoint(delta_q=8.0, levels=1),
    2: QualityPoint(delta_q=4.0, levels=2),
    3: QualityPoint(delta_q=2.0, levels=3),
    4: QualityPoint(delta_q=1.0, levels=4),
}


@dataclass(frozen=True)
class EncoderConfig:
    """Every encoder knob, flat so each field maps to one CLI flag/config key.

    The decode-relevant subset (quality point and gate threshold) is
    serialized into the stream header; the rest only shapes the encoder's
    choices and never needs to travel.
    """

    gamma: float = 0.98
    delta_q: float = 8.0
    levels: int = 1
    learning_rate: float = 0.005
    initial_variance: float = 15.0
    match_threshold: float = 16.0
    variance_floor: float = 4.0
    init_frames: int = 200
    bg_prefix: float = 0.75
    new_component_weight: float = 0.05
    components: int = 4
    majority_votes: int = 5
    open_size: int = 3
    dilate_size: int = 5
    min_component_pixels: int = 16
    grid: int = 8
    block_size: int = 8
    search_range: int = 16
    anchor_interval: int = 16
    feather_band: int = 3

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must be in (0, 1)")
        # these two are pinned by the bitstream's vector bounds
        if self.block_size != BLOCK:
            raise ValueError(f"block_size is fixed at {BLOCK}")
        if self.search_range != SEARCH_RANGE:
            raise ValueError(f"search_range is fixed at {SEARCH_RANGE}")
        if self.anchor_interval < 1:
            raise ValueError("anchor_interval must be >= 1")
        if not (0 <= self.feather_band <= 16):
            raise ValueError("feather_band must be in [0, 16]")
        self.quality    # construct once so bad values fail here
        self.gmm_params
        self.fg_params

    @property
    def quality(self) -> QualityPoint:
        return QualityPoint(self.delta_q, self.levels)

    @property
    def gmm_params(self) -> GmmParams:
        return GmmParams(
            learning_rate=self.learning_rate,
            initial_variance=self.initial_variance,
            match_threshold=self.match_threshold,
            variance_floor=self.variance_floor,
            init_frames=self.init_frames,
            bg_prefix=self.bg_prefix,
            new_component_weight=self.new_component_weight,
            components=self.components)

    @property
    def fg_params(self) -> FgParams:
        return FgParams(
            majority_votes=self.majority_votes,
            open_size=self.open_size,
            dilate_size=self.dilate_size,
            min_component_pixels=self.min_component_pixels,
            grid=self.grid)

    @classmethod
    def from_quality(cls, point: int, **overrides) -> "EncoderConfig":
        if point not in QUALITY_LADDER:
            raise ValueError(f"quality point must be one of {sorted(QUALITY_LADDER)}")
        q = QUALITY_LADDER[point]
        return cls(delta_q=q.delta_q, levels=q.levels, **overrides)


@dataclass(frozen=True)
class TimingReport:
    """Mean milliseconds per frame for each stage, plus wall totals.

    The motion, compensation and residual rows are sub-stages of the
    foreground row, so the encode total bounds separation + background +
    foreground (the exclusive encode-side stages).
    """

    separation_ms: float
    background_ms: float
    foreground_ms: float
    decode_ms: float
    motion_ms: float
    compensation_ms: float
    residual_ms: float
    encode_total_s: float
    decode_total_s: float
    frame_count: int

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError("timings must be nonnegative")

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("separation", self.separation_ms),
            ("background compression", self.background_ms),
            ("foreground compression", self.foreground_ms),
            ("two-stage decoding", self.decode_ms),
            ("motion estimation", self.motion_ms),
            ("motion compensation", self.compensation_ms),
            ("residual codec", self.residual_ms),
        ]


@dataclass(frozen=True)
class EncodeResult:
    data: bytes
    stream: FbvStream
    quality: QualityReport
    budget: BitBudgetReport
    timing: TimingReport
    gate_trace: tuple[float, ...]       # per-frame MS-SSIM vs current template
    recon: tuple[Frame, ...]            # closed-loop pre-enhancement frames


@dataclass(frozen=True)
class DecodeResult:
    video: VideoSequence
    pre_enhance: tuple[Frame, ...]
    quality: QualityReport | None
    decode_total_s: float

    @property
    def decode_ms(self) -> float:
        n = len(self.video.frames)
        return 1000.0 * self.decode_total_s / n if n else 0.0


def _pad8(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[1:]
    ph, pw = (-h) % 8, (-w) % 8
    if not ph and not pw:
        return arr
    return np.pad(arr, ((0, 0), (0, ph), (0, pw)), mode="edge")


def _padded_shapes(regions: tuple) -> list[tuple[int, int]]:
    return [(r.h + (-r.h) % 8, r.w + (-r.w) % 8) for r in regions]


def _zero_frame(h: int, w: int, index: int) -> Frame:
    return Frame(np.zeros((3, h, w), dtype=np.uint8), index)


def _code_foreground(ref: Frame, cur: Frame, used: RegionSet, q: QualityPoint,
                     clock: dict | None = None):
    """Flow + residual coding of one frame's regions against ref (closed loop).

    Returns (flow_bytes, residual_bytes, reconstructed fg Frame).
    """
    t0 = time.perf_counter()
    flow = estimate_flow(ref, cur, used)
    flow_bytes = encode_flow(flow)
    t1 = time.perf_counter()
    warped = predict(ref, warp(ref, flow, used), flow)
    t2 = time.perf_counter()
    patches = []
    for r in used.regions:
        res = (cur.planes[:, r.y:r.y2, r.x:r.x2].astype(np.int64)
               - warped.planes[:, r.y:r.y2, r.x:r.x2].astype(np.int64))
        patches.append(_pad8(res))
    res_bytes, decoded = encode_residual(patches, q)
    rec = _assemble_foreground(warped, decoded, used, cur.frame_index)
    t3 = time.perf_counter()
    if clock is not None:
        clock["motion"] += t1 - t0
        clock["compensation"] += t2 - t1
        clock["residual"] += t3 - t2
    return flow_bytes, res_bytes, rec


def _assemble_foreground(warped: Frame, decoded_patches, used: RegionSet,
                         index: int) -> Frame:
    res_plane = np.zeros_like(warped.planes, dtype=np.int64)
    for r, patch in zip(used.regions, decoded_patches):
        res_plane[:, r.y:r.y2, r.x:r.x2] = patch[:, :r.h, :r.w]
    planes = reconstruct_foreground(warped.planes, res_plane, used.mask)
    return Frame(planes, index)


def encode(video: VideoSequence, config: EncoderConfig = EncoderConfig()) -> EncodeResult:
    """Compress a sequence into a container plus reports; fully deterministic."""
    frames = video.frames
    n = len(frames)
    h, w = frames[0].height, frames[0].width
    if n < config.init_frames:
        raise FbvError(
            f"sequence has {n} frames but model initialization needs "
            f"{config.init_frames}")
    q = config.quality
    clock = {"separation": 0.0, "background": 0.0, "foreground": 0.0,
             "motion": 0.0, "compensation": 0.0, "residual": 0.0}
    t_start = time.perf_counter()

    # pass one: train the separator, then seed the template chain at frame 0
    t0 = time.perf_counter()
    state = gmm_init(frames[:config.init_frames], config.gmm_params)
    clock["separation"] += time.perf_counter() - t0
    t0 = time.perf_counter()
    chain = TemplateChain(gamma=config.gamma, anchor_interval=config.anchor_interval)
    chain.admit(Frame(background_estimate(state).planes, 0))
    clock["background"] += time.perf_counter() - t0

    # pass two: code every frame with the trained state carried forward
    gate_trace: list[float] = []
    fg_records: list[ForegroundRecord] = []
    fg_recon: dict[int, tuple[RegionSet, Frame]] = {}
    prev_fg: Frame | None = None
    rs_prev = RegionSet((), h, w)
    for t in range(n):
        t0 = time.perf_counter()
        state, sep = gmm_update(state, frames[t])
        t1 = time.perf_counter()
        candidate = Frame(sep.background.planes, t)
        score = ms_ssim(chain.current.image, candidate)
        gate_trace.append(score)
        if score < config.gamma and t > chain.current.frame_index:
            chain.admit(candidate)
        t2 = time.perf_counter()
        rs_cur = fp(frames[t], sep.points, config.fg_params)
        used = combine_regions(rs_prev, rs_cur)
        if used.regions:
            ref = prev_fg if prev_fg is not None else _zero_frame(h, w, t)
            flow_b, res_b, rec = _code_foreground(ref, frames[t], used, q, clock)
            fg_records.append(ForegroundRecord(t, used.regions, flow_b, res_b))
            fg_recon[t] = (used, rec)
            prev_fg = rec
        else:
            prev_fg = None
        rs_prev = rs_cur
        t3 = time.perf_counter()
        clock["separation"] += t1 - t0
        clock["background"] += t2 - t1
        clock["foreground"] += t3 - t2

    header = StreamHeader(
        width=w, height=h, fps_num=video.fps_num, fps_den=video.fps_den,
        frame_count=n, levels=q.levels, delta_fp=q.delta_fp,
        gamma_fp=round(config.gamma * GAMMA_SCALE))
    templates = tuple(TemplateRecord(bt.frame_index, bt.anchor, bt.payload)
                      for bt in chain.templates)
    stream = FbvStream(header, templates,
                       tuple(fg_records),
                       build_segments(n, [r.frame_no for r in fg_records]))
    data = write_stream(stream)
    encode_total = time.perf_counter() - t_start

    # encoder-side reconstructions (pre-enhancement), for the closed-loop check
    timgs = [(bt.frame_index, bt.image) for bt in chain.templates]
    recon = tuple(c.image for c in _composites(timgs, fg_recon, n))

    # self-decode for the quality report and the decode-side timing row
    dec = decode_bytes(data, enhance_output=config.feather_band > 0,
                       band=max(config.feather_band, 1), reference=video)
    per_ms = lambda s: 1000.0 * s / n
    timing = TimingReport(
        separation_ms=per_ms(clock["separation"]),
        background_ms=per_ms(clock["background"]),
        foreground_ms=per_ms(clock["foreground"]),
        decode_ms=dec.decode_ms,
        motion_ms=per_ms(clock["motion"]),
        compensation_ms=per_ms(clock["compensation"]),
        residual_ms=per_ms(clock["residual"]),
        encode_total_s=encode_total,
        decode_total_s=dec.decode_total_s,
        frame_count=n)
    return EncodeResult(data=data, stream=stream, quality=dec.quality,
                        budget=budget_of(stream), timing=timing,
                        gate_trace=tuple(gate_trace), recon=recon)


def _decoded_templates(stream: FbvStream) -> list[tuple[int, Frame]]:
    h, w = stream.header.height, stream.header.width
    prev: BackgroundTemplate | None = None
    out = []
    for tr in stream.templates:
        prev = decode_template(None if tr.anchor else prev, tr.residual,
                               tr.frame_no, h, w)
        out.append((tr.frame_no, prev.image))
    return out


def _decode_foreground(stream: FbvStream, records) -> dict[int, tuple[RegionSet, Frame]]:
    """Closed-loop foreground decode of consecutive records (a run prefix)."""
    h, w = stream.header.height, stream.header.width
    q = stream.header.quality
    out: dict[int, tuple[RegionSet, Frame]] = {}
    prev_fg: Frame | None = None
    prev_no = None
    for rec in records:
        rs = RegionSet(rec.regions, h, w)
        contiguous = prev_no is not None and rec.frame_no == prev_no + 1
        ref = prev_fg if contiguous and prev_fg is not None \
            else _zero_frame(h, w, rec.frame_no)
        flow = decode_flow(rec.flow, rs)
        warped = predict(ref, warp(ref, flow, rs), flow)
        patches = decode_residual(rec.residual, _padded_shapes(rec.regions), q)
        fg = _assemble_foreground(warped, patches, rs, rec.frame_no)
        out[rec.frame_no] = (rs, fg)
        prev_fg, prev_no = fg, rec.frame_no
    return out


def _composites(timgs, fg_map, frame_count: int) -> list[CompositeFrame]:
    """Mask-composite every frame from template bracket plus foreground map."""
    tframes = [f for f, _ in timgs]
    out = []
    for t in range(frame_count):
        pos = bisect_right(tframes, t)
        if pos == 0:
            bg = timgs[0][1]
        elif pos == len(timgs):
            bg = timgs[-1][1]
        else:
            fp_, fn = tframes[pos - 1], tframes[pos]
            bg = interpolated_background(timgs[pos - 1][1], timgs[pos][1],
                                         fn - fp_, fn - t)
        bg = Frame(bg.planes, t)
        if t in fg_map:
            rs, fg = fg_map[t]
            out.append(composite(fg, bg, rs.mask))
        else:
            hh, ww = bg.height, bg.width
            out.append(CompositeFrame(bg, np.zeros((hh, ww), dtype=bool)))
    return out


def decode_stream(stream: FbvStream, enhance_output: bool = True,
                  band: int = DEFAULT_BAND) -> tuple[list[Frame], list[Frame]]:
    """Full-sequence decode. Returns (pre-enhancement, output) frame lists."""
    n = stream.header.frame_count
    timgs = _decoded_templates(stream)
    fg_map = _decode_foreground(stream, stream.foregrounds)
    comps = _composites(timgs, fg_map, n)
    pre = [c.image for c in comps]
    if not enhance_output:
        return pre, list(pre)
    out = []
    for t, c in enumerate(comps):
        if t in fg_map:
            out.append(enhance(c, fg_map[t][0], band))
        else:
            out.append(c.image)
    return pre, out


def decode_bytes(data: bytes, enhance_output: bool = True,
                 band: int = DEFAULT_BAND,
                 reference: VideoSequence | None = None) -> DecodeResult:
    """Decode a container; optionally score the output against a reference."""
    t0 = time.perf_counter()
    stream = read_stream(data)
    pre, out = decode_stream(stream, enhance_output, band)
    total = time.perf_counter() - t0
    video = VideoSequence(tuple(out), stream.header.fps_num, stream.header.fps_den)
    quality = None
    if reference is not None:
        if len(reference.frames) != len(out):
            raise FbvError("reference frame count does not match stream")
        quality = _quality_report(reference, out, stream, len(data))
    return DecodeResult(video=video, pre_enhance=tuple(pre), quality=quality,
                        decode_total_s=total)


def decode_frame(stream: FbvStream, frame_no: int, enhance_output: bool = True,
                 band: int = DEFAULT_BAND) -> Frame:
    """Random access: decode one frame, bit-identical to the sequential path."""
    plan: RetrievalPlan = lookup(stream, frame_no)
    prev: BackgroundTemplate | None = None
    images = {}
    for tr in plan.template_chain:
        prev = decode_template(None if tr.anchor else prev, tr.residual,
                               tr.frame_no, stream.header.height,
                               stream.header.width)
        images[tr.frame_no] = prev.image
    bg = interpolated_background(images[plan.bg_prev.frame_no],
                                 images[plan.bg_next.frame_no],
                                 plan.interval, plan.offset)
    bg = Frame(bg.planes, frame_no)
    if plan.foreground is None:
        return bg
    # walk back to the run start: the first record decoded from a zero reference
    fgs = stream.foregrounds
    idx = next(i for i, r in enumerate(fgs) if r.frame_no == frame_no)
    start = idx
    while start > 0 and fgs[start - 1].frame_no == fgs[start].frame_no - 1:
        start -= 1
    fg_map = _decode_foreground(stream, fgs[start:idx + 1])
    rs, fg = fg_map[frame_no]
    comp = composite(fg, bg, rs.mask)
    if not enhance_output:
        return comp.image
    return enhance(comp, rs, band)


def _masked(planes: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask[None], planes, 0)


def _quality_report(source: VideoSequence, decoded, stream: FbvStream,
                    total_bytes: int) -> QualityReport:
    """Score decoded output against the source, including the mixture metric.

    The foreground score averages luma MS-SSIM over frames with regions,
    computed with off-mask pixels blanked in both images; the background
    score blanks the mask instead. Their mixture uses the cross-weighting
    rule with the mean mask fraction as the foreground area ratio. A stream
    with no foreground reports the background score alone.
    """
    h, w = stream.header.height, stream.header.width
    masks = {f.frame_no: RegionSet(f.regions, h, w).mask
             for f in stream.foregrounds}
    fg_bits = {f.frame_no: (8 * len(f.flow), 8 * len(f.residual))
               for f in stream.foregrounds}
    psnr_pf, ssim_pf = [], []
    m_f, m_b, sharp, rd = [], [], [], []
    area = 0.0
    for t, (src, rec) in enumerate(zip(source.frames, decoded)):
        psnr_pf.append(psnr(src, rec))
        ssim_pf.append(ms_ssim(src, rec))
        sharp.append(laplacian_sharpness(rec))
        mask = masks.get(t)
        if mask is not None:
            area += mask.mean()
            m_f.append(ms_ssim(_masked(src.planes, mask), _masked(rec.planes, mask)))
            m_b.append(ms_ssim(_masked(src.planes, ~mask), _masked(rec.planes, ~mask)))
            motion_bits, res_bits = fg_bits[t]
        else:
            m_b.append(ssim_pf[-1])
            motion_bits = res_bits = 0
        frame_bits = BitBudgetReport(0, res_bits, motion_bits)
        fg_mask = mask if mask is not None else np.zeros((h, w), dtype=bool)
        rd.append(rd_objective(src, rec, src, rec, frame_bits, mask=fg_mask))
    n = len(decoded)
    r_f = area / n
    mb = float(np.mean(m_b))
    if m_f:
        mix = fb_mixture(float(np.mean(m_f)), mb, r_f, 1.0 - r_f)
    else:
        mix = mb
    return QualityReport(
        psnr_per_frame=tuple(psnr_pf), ms_ssim_per_frame=tuple(ssim_pf),
        bpp=bpp(total_bytes, w, h, n), fb_mixture=mix,
        sharpness=float(np.mean(sharp)), rd_objective=float(np.mean(rd)))


@dataclass(frozen=True)
class AnalyzeReport:
    text: str
    budget: BitBudgetReport
    bpp: float


def analyze_bytes(data: bytes) -> AnalyzeReport:
    """Human-readable stream dump: header, records, indexes, bit split, bpp."""
    stream = read_stream(data)
    h = stream.header
    budget = budget_of(stream)
    rate = bpp(len(data), h.width, h.height, h.frame_count)
    br, fr, fmv = budget.ratios
    out = io.StringIO()
    p = lambda *a: print(*a, file=out)
    p(f"container: {len(data)} bytes, {h.frame_count} frames, "
      f"{h.width}x{h.height} @ {h.fps_num}/{h.fps_den} fps")
    p(f"quality: delta={h.quality.delta_q:g} levels={h.levels}  "
      f"gate gamma={h.gamma:g}  flags={h.flags}")
    p("")
    p("records:")
    p("  kind        frame  payload_bytes  detail")
    rows = sorted(
        [(t.frame_no, 0, t) for t in stream.templates]
        + [(f.frame_no, 1, f) for f in stream.foregrounds])
    for _, kind, rec in rows:
        if kind == 0:
            tag = "anchor" if rec.anchor else "chained"
            p(f"  template  {rec.frame_no:7d}  {len(rec.residual) + 5:13d}  {tag}")
        else:
            p(f"  fgframe   {rec.frame_no:7d}  "
              f"{2 + 8 * len(rec.regions) + 8 + len(rec.flow) + len(rec.residual):13d}  "
              f"{len(rec.regions)} region(s), flow {len(rec.flow)} B, "
              f"residual {len(rec.residual)} B")
    p("")
    p(f"template index: {[t.frame_no for t in stream.templates]}")
    p(f"foreground index: {[f.frame_no for f in stream.foregrounds]}")
    p(f"segments: {list(stream.segments)}")
    p("")
    p("bit allocation (entropy payloads):")
    p(f"  BR  background residual  {budget.bits_bg_residual:10d} bits  {br:7.4f}")
    p(f"  FR  foreground residual  {budget.bits_fg_residual:10d} bits  {fr:7.4f}")
    p(f"  FMV foreground motion    {budget.bits_fg_motion:10d} bits  {fmv:7.4f}")
    p(f"bpp: {rate:.6f}")
    return AnalyzeReport(out.getvalue(), budget, rate)


@dataclass(frozen=True)
class RdPoint:
    delta_q: float
    levels: int
    bpp: float
    psnr_db: float
    ms_ssim: float
    fb_mixture: float


def rd_sweep(video: VideoSequence, points,
             config: EncoderConfig = EncoderConfig()) -> list[RdPoint]:
    """Encode/decode/measure once per quality point (needs at least two)."""
    resolved = []
    for pt in points:
        if isinstance(pt, QualityPoint):
            resolved.append(pt)
        else:
            if pt not in QUALITY_LADDER:
                raise ValueError(f"unknown ladder point {pt!r}")
            resolved.append(QUALITY_LADDER[pt])
    if len(resolved) < 2:
        raise ValueError("a sweep needs at least two quality points")
    rows = []
    for q in resolved:
        cfg = replace(config, delta_q=q.delta_q, levels=q.levels)
        res = encode(video, cfg)
        rows.append(RdPoint(q.delta_q, q.levels, res.quality.bpp,
                            res.quality.psnr_mean, res.quality.ms_ssim_mean,
                            res.quality.fb_mixture))
    return rows


def sweep_csv(rows) -> str:
    out = ["delta_q,levels,bpp,psnr_db,ms_ssim,fb_mixture"]
    for r in rows:
        out.append(f"{r.delta_q:g},{r.levels},{r.bpp:.6f},{r.psnr_db:.4f},"
                   f"{r.ms_ssim:.6f},{r.fb_mixture:.6f}")
    return "\n".join(out) + "\n"
