"""Deterministic synthetic cholecystectomy-like scene generator.

Produces RGB frames, ground-truth masks and disparity, pseudo foundation-model
tokens, and phase labels.  Geometry and labels depend only on the seed; the
appearance domain (A or B) changes colors and illumination, never geometry,
so matched-seed datasets differ only in RGB.  An extraction-noise model
degrades DT payloads the way corrupted inputs degrade real extraction models.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .frames import (
    DTFrame,
    InstanceId,
    ManifestRow,
    N_INSTANCES,
    N_PHASES,
    VideoSequence,
    write_dtseq,
    write_manifest,
)

DESCRIPTOR_DIM = 21  # 5 scalars + 4x4 downsampled mask
DEPTH_POOL = 8       # disparity is pooled to 8x8 before projection
DEFAULT_DEPTH_TOKEN_DIM = 32


def derive_seed(root: int, *labels) -> int:
    """Splittable 64-bit seed: hash of the root seed and a label path.

    Children are independent of generation order and of each other.
    """
    h = hashlib.sha256()
    h.update(str(int(root)).encode())
    for lab in labels:
        h.update(b"/")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest()[:8], "little")


# ---------------------------------------------------------------------------
# phase grammar


@dataclass(frozen=True)
class PhaseRule:
    """Instance-presence rule for one phase."""

    required: frozenset[int]
    optional: frozenset[int] = frozenset()
    optional_prob: float = 0.5


@dataclass(frozen=True)
class PhaseGrammar:
    """The 7 phases in canonical order with durations and presence rules."""

    duration_range: tuple[tuple[int, int], ...]
    rules: tuple[PhaseRule, ...]

    def __post_init__(self):
        if len(self.duration_range) != N_PHASES or len(self.rules) != N_PHASES:
            raise ValueError(f"grammar must define exactly {N_PHASES} phases")
        valid = {int(i) for i in InstanceId}
        for p, (lo, hi) in enumerate(self.duration_range):
            if not 1 <= lo <= hi:
                raise ValueError(f"phase {p}: bad duration range ({lo}, {hi})")
        for p, rule in enumerate(self.rules):
            if not rule.required <= valid or not rule.optional <= valid:
                raise ValueError(f"phase {p}: rule names unknown instance ids")


# Phase/tool co-occurrence mirroring cholecystectomy workflow: presence is
# predictive of phase, with phases 1 and 3 separable only through temporal
# context (what came before).
DEFAULT_RULES = (
    PhaseRule(frozenset()),
    PhaseRule(frozenset({InstanceId.LEFT_GRASPER, InstanceId.HOOK})),
    PhaseRule(frozenset({InstanceId.LEFT_GRASPER, InstanceId.CLIPPER}),
              frozenset({InstanceId.SCISSORS}), 0.5),
    PhaseRule(frozenset({InstanceId.LEFT_GRASPER, InstanceId.HOOK})),
    PhaseRule(frozenset({InstanceId.LEFT_GRASPER, InstanceId.SPECIMEN_BAG})),
    PhaseRule(frozenset({InstanceId.BIPOLAR, InstanceId.IRRIGATOR})),
    PhaseRule(frozenset({InstanceId.RIGHT_GRASPER, InstanceId.SPECIMEN_BAG})),
)


def default_grammar(frames_min: int = 200, frames_max: int = 400) -> PhaseGrammar:
    """Durations sized so a full 7-phase video lands in [frames_min, frames_max]."""
    if frames_min < 2 * N_PHASES:
        raise ValueError(f"frames_min must be at least {2 * N_PHASES}")
    if frames_max < frames_min:
        raise ValueError("frames_max < frames_min")
    lo = frames_min // N_PHASES
    hi = max(lo, frames_max // N_PHASES)
    return PhaseGrammar(tuple((lo, hi) for _ in range(N_PHASES)), DEFAULT_RULES)


def phase_track(seed: int, grammar: PhaseGrammar) -> np.ndarray:
    """Per-frame phase labels: phases in canonical order, seeded durations."""
    rng = np.random.default_rng(seed)
    out = []
    for phase, (lo, hi) in enumerate(grammar.duration_range):
        out.extend([phase] * int(rng.integers(lo, hi + 1)))
    return np.array(out, dtype=np.int64)


def validate_track(track: np.ndarray, grammar: PhaseGrammar) -> list[str]:
    """Order/duration problems in a phase track; empty list when well formed."""
    problems = []
    runs: list[tuple[int, int]] = []
    for p in track:
        if runs and runs[-1][0] == p:
            runs[-1] = (int(p), runs[-1][1] + 1)
        else:
            runs.append((int(p), 1))
    if [r[0] for r in runs] != list(range(N_PHASES)):
        problems.append(f"phase order {[r[0] for r in runs]} != canonical 0..6")
        return problems
    for p, n in runs:
        lo, hi = grammar.duration_range[p]
        if not lo <= n <= hi:
            problems.append(f"phase {p} runs {n} frames, outside [{lo}, {hi}]")
    return problems


# ---------------------------------------------------------------------------
# scene state and appearance


@dataclass
class InstanceState:
    """Pose of one present instance: capsules run from an edge anchor to the tip."""

    center: tuple[float, float]       # tip (x, y) in pixels
    extent: float                     # ellipse semi-axis / capsule radius scale, px
    plane: float                      # disparity plane in (0, 1); larger = nearer
    velocity: tuple[float, float]     # px / frame
    anchor: tuple[float, float] | None = None  # entry point on the frame edge


@dataclass
class SceneState:
    """Per-frame scene: instance id -> state for every present instance."""

    width: int
    height: int
    instances: dict[int, InstanceState]

    def present_ids(self) -> frozenset[int]:
        return frozenset(self.instances)


@dataclass(frozen=True)
class AppearanceDomain:
    """Colors, background texture, and illumination of one appearance domain."""

    tag: str
    class_colors: np.ndarray          # (10, 3) float in [0, 255]
    bg_base: np.ndarray               # (3,) float
    bg_amp: float
    bg_freq: tuple[float, float]
    bg_phase: float
    illumination: float


# Per-domain palettes: same geometry distribution, clearly different colors.
PALETTE_A = np.array([
    (186, 160, 64),    # gallbladder
    (204, 204, 212),   # left grasper
    (168, 190, 216),   # top grasper
    (216, 196, 168),   # right grasper
    (64, 92, 204),     # bipolar
    (232, 210, 72),    # hook
    (118, 220, 212),   # scissors
    (222, 120, 198),   # clipper
    (92, 202, 92),     # irrigator
    (236, 236, 236),   # specimen bag
], dtype=np.float64)

PALETTE_B = np.array([
    (96, 126, 188),
    (150, 96, 64),
    (196, 150, 90),
    (90, 160, 150),
    (212, 190, 70),
    (88, 70, 180),
    (210, 96, 84),
    (96, 204, 120),
    (200, 130, 210),
    (130, 130, 150),
], dtype=np.float64)

BG_BASE = {"A": np.array([152.0, 58.0, 52.0]), "B": np.array([58.0, 96.0, 110.0])}
BASE_ILLUMINATION = {"A": 1.0, "B": 0.82}


def appearance_domain(tag: str, rng: np.random.Generator) -> AppearanceDomain:
    """Per-video appearance parameters for one domain."""
    if tag not in ("A", "B"):
        raise ValueError(f"unknown appearance domain {tag!r}")
    return AppearanceDomain(
        tag=tag,
        class_colors=(PALETTE_A if tag == "A" else PALETTE_B).copy(),
        bg_base=BG_BASE[tag].copy(),
        bg_amp=12.0 + 8.0 * rng.random(),
        bg_freq=(1.0 + 2.0 * rng.random(), 1.0 + 2.0 * rng.random()),
        bg_phase=2.0 * math.pi * rng.random(),
        illumination=BASE_ILLUMINATION[tag] * (1.0 + 0.08 * (rng.random() - 0.5)),
    )


# Geometry table shared by both domains: shape kind, entry side for
# instruments, and extent range as a fraction of min(H, W).
_ELLIPSES = {int(InstanceId.GALLBLADDER): (0.26, 0.36), int(InstanceId.SPECIMEN_BAG): (0.18, 0.26)}
_ENTRY_SIDE = {
    int(InstanceId.LEFT_GRASPER): "left",
    int(InstanceId.TOP_GRASPER): "top",
    int(InstanceId.RIGHT_GRASPER): "right",
    int(InstanceId.BIPOLAR): "left",
    int(InstanceId.HOOK): "right",
    int(InstanceId.SCISSORS): "right",
    int(InstanceId.CLIPPER): "top",
    int(InstanceId.IRRIGATOR): "left",
}
_CAPSULE_RADIUS = {  # fraction of min(H, W)
    int(InstanceId.LEFT_GRASPER): 0.055,
    int(InstanceId.TOP_GRASPER): 0.055,
    int(InstanceId.RIGHT_GRASPER): 0.055,
    int(InstanceId.BIPOLAR): 0.075,
    int(InstanceId.HOOK): 0.045,
    int(InstanceId.SCISSORS): 0.065,
    int(InstanceId.CLIPPER): 0.085,
    int(InstanceId.IRRIGATOR): 0.06,
}


def shaded_color(domain: AppearanceDomain, instance_id: int, plane: float) -> np.ndarray:
    """Painted RGB (float, pre-rounding) of an instance at a disparity plane."""
    shade = 0.72 + 0.28 * plane
    return np.clip(domain.class_colors[instance_id - 1] * shade * domain.illumination, 0.0, 255.0)


def render_frame(state: SceneState, domain: AppearanceDomain) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rasterize a scene: (rgb uint8 HxWx3, masks uint8 10xHxW, disparity float32).

    Masks are amodal (each instance's full shape); RGB and disparity are
    composited nearest-last so larger planes occlude smaller ones.
    Background disparity is 0.
    """
    h, w = state.height, state.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    masks = np.zeros((N_INSTANCES, h, w), dtype=np.uint8)
    disparity = np.zeros((h, w), dtype=np.float64)

    tx = xs / max(w - 1, 1)
    ty = ys / max(h - 1, 1)
    wave = np.sin(2.0 * math.pi * (domain.bg_freq[0] * tx + domain.bg_freq[1] * ty) + domain.bg_phase)
    bg = domain.bg_base[None, None, :] + domain.bg_amp * wave[..., None] \
        + 18.0 * (ty - 0.5)[..., None]
    rgb = np.clip(bg * domain.illumination, 0.0, 255.0)

    for iid, inst in sorted(state.instances.items(), key=lambda kv: kv[1].plane):
        cx, cy = inst.center
        if iid in _ELLIPSES:
            a = inst.extent
            b = 0.62 * inst.extent
            inside = ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1.0
        else:
            ax, ay = inst.anchor
            r = inst.extent
            dx, dy = cx - ax, cy - ay
            seg_len2 = dx * dx + dy * dy
            if seg_len2 < 1e-9:
                dist2 = (xs - cx) ** 2 + (ys - cy) ** 2
            else:
                t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / seg_len2, 0.0, 1.0)
                dist2 = (xs - (ax + t * dx)) ** 2 + (ys - (ay + t * dy)) ** 2
            inside = dist2 <= r * r
        masks[iid - 1][inside] = 1
        disparity[inside] = inst.plane
        rgb[inside] = shaded_color(domain, iid, inst.plane)

    rgb_u8 = np.floor(np.clip(rgb, 0.0, 255.0) + 0.5).astype(np.uint8)
    return rgb_u8, masks, disparity.astype(np.float32)


# ---------------------------------------------------------------------------
# pseudo foundation-model tokens


@dataclass(frozen=True)
class TokenProjector:
    """Frozen random projections that stand in for foundation-model token heads.

    One (256 x 21) matrix for mask-shape descriptors and one
    (depth_dim x 64) matrix for pooled disparity, both fixed per dataset.
    """

    mask_proj: np.ndarray
    depth_proj: np.ndarray

    @classmethod
    def from_seed(cls, seed: int, depth_dim: int = DEFAULT_DEPTH_TOKEN_DIM) -> "TokenProjector":
        rng = np.random.default_rng(seed)
        mask_proj = rng.standard_normal((256, DESCRIPTOR_DIM)) / math.sqrt(DESCRIPTOR_DIM)
        depth_proj = rng.standard_normal((depth_dim, DEPTH_POOL * DEPTH_POOL)) / math.sqrt(DEPTH_POOL * DEPTH_POOL)
        return cls(mask_proj, depth_proj)

    @property
    def depth_dim(self) -> int:
        return self.depth_proj.shape[0]


def _block_means(x: np.ndarray, grid: int) -> np.ndarray:
    rows = np.array_split(np.arange(x.shape[0]), grid)
    cols = np.array_split(np.arange(x.shape[1]), grid)
    out = np.empty((grid, grid), dtype=np.float64)
    for i, rr in enumerate(rows):
        for j, cc in enumerate(cols):
            out[i, j] = x[np.ix_(rr, cc)].mean()
    return out


def shape_descriptor(mask: np.ndarray, disparity: np.ndarray) -> np.ndarray:
    """21-dim geometry summary: area, centroid, extent, mean disparity, 4x4 grid."""
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    area_frac = len(ys) / (h * w)
    cx = xs.mean() / w
    cy = ys.mean() / h
    span_y = ys.max() - ys.min() + 1
    span_x = xs.max() - xs.min() + 1
    extent = math.hypot(span_y, span_x) / math.hypot(h, w)
    mean_disp = float(disparity[mask > 0].mean())
    cells = _block_means(mask.astype(np.float64), 4).reshape(-1)
    return np.concatenate([[area_frac, cx, cy, extent, mean_disp], cells])


def pseudo_tokens(masks: np.ndarray, disparity: np.ndarray,
                  projection: TokenProjector | int) -> tuple[np.ndarray, np.ndarray]:
    """Token table (10, 257) and depth token from ground-truth masks/disparity.

    Present instances get a frozen random projection of their shape
    descriptor with flag 1; absent instances are zero with flag 0.  The depth
    token projects the 8x8-pooled disparity map, averaged per projection row.
    """
    proj = projection if isinstance(projection, TokenProjector) else TokenProjector.from_seed(projection)
    table = np.zeros((N_INSTANCES, 257), dtype=np.float64)
    for i in range(N_INSTANCES):
        if masks[i].any():
            table[i, :256] = proj.mask_proj @ shape_descriptor(masks[i], disparity)
            table[i, 256] = 1.0
    pooled = _block_means(np.asarray(disparity, dtype=np.float64), DEPTH_POOL).reshape(-1)
    depth_token = (proj.depth_proj @ pooled) / pooled.size
    return table, depth_token


# ---------------------------------------------------------------------------
# extraction noise

# Amplitudes per severity 0..5; each row is non-decreasing.
MORPH_AMPLITUDE = (0, 1, 1, 2, 3, 4)
DROPOUT_PROB = (0.0, 0.02, 0.05, 0.10, 0.20, 0.35)
DISPARITY_SIGMA = (0.0, 0.02, 0.05, 0.12, 0.20, 0.30)
TOKEN_JITTER = (0.0, 0.01, 0.03, 0.06, 0.12, 0.25)


@dataclass(frozen=True)
class ExtractionNoise:
    """Severity-indexed degradation of DT payloads (severity 0 is identity)."""

    severity: int
    morph_amplitude: int
    dropout_prob: float
    disparity_sigma: float
    token_jitter: float

    @classmethod
    def from_severity(cls, severity: int) -> "ExtractionNoise":
        if not 0 <= severity <= 5:
            raise ValueError(f"extraction-noise severity must be 0..5, got {severity}")
        return cls(severity, MORPH_AMPLITUDE[severity], DROPOUT_PROB[severity],
                   DISPARITY_SIGMA[severity], TOKEN_JITTER[severity])


def apply_extraction_noise(frame: DTFrame, noise: ExtractionNoise, seed: int,
                           projection: TokenProjector | int) -> DTFrame:
    """Degrade a frame's DT payload: morphed/dropped masks, noisy disparity,
    tokens re-derived from the degraded maps and jittered.  Deterministic in
    (frame, noise, seed); severity 0 returns an unchanged copy.
    """
    if noise.severity == 0:
        return frame.copy()
    proj = projection if isinstance(projection, TokenProjector) else TokenProjector.from_seed(projection)
    rng = np.random.default_rng(seed)

    dilate_choice = rng.integers(0, 2, N_INSTANCES)
    drop_roll = rng.random(N_INSTANCES)
    masks = frame.masks.copy()
    for i in range(N_INSTANCES):
        if not masks[i].any():
            continue
        if noise.morph_amplitude > 0:
            op = ndimage.binary_dilation if dilate_choice[i] else ndimage.binary_erosion
            masks[i] = op(masks[i], iterations=noise.morph_amplitude).astype(np.uint8)
        if drop_roll[i] < noise.dropout_prob:
            masks[i] = 0

    disp = frame.disparity.astype(np.float64)
    disp = np.clip(disp + noise.disparity_sigma * rng.standard_normal(disp.shape), 0.0, 1.0)

    table, depth_token = pseudo_tokens(masks, disp, proj)
    jitter = rng.standard_normal((N_INSTANCES, 256)) * noise.token_jitter
    depth_jitter = rng.standard_normal(depth_token.shape) * noise.token_jitter
    present = table[:, 256] == 1.0
    table[present, :256] += jitter[present]
    depth_token = depth_token + depth_jitter

    return DTFrame(masks, disp.astype(np.float32), table.astype(np.float32),
                   depth_token.astype(np.float32), frame.phase)


# ---------------------------------------------------------------------------
# whole-video and dataset generation


@dataclass(frozen=True)
class GenConfig:
    """Dataset generation settings (see also from_file/to_text)."""

    videos: int
    frames_min: int = 200
    frames_max: int = 400
    height: int = 64
    width: int = 64
    domain: str = "A"
    extract_noise: int = 0
    seed: int = 0
    depth_token_dim: int = DEFAULT_DEPTH_TOKEN_DIM

    def __post_init__(self):
        if self.videos < 1:
            raise ValueError("need at least one video")
        if self.domain not in ("A", "B"):
            raise ValueError(f"domain must be A or B, got {self.domain!r}")
        ExtractionNoise.from_severity(self.extract_noise)
        if self.height % 4 or self.width % 4:
            raise ValueError("height and width must be multiples of 4")

    @classmethod
    def from_file(cls, path) -> "GenConfig":
        kv = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        ints = {k: int(kv[k]) for k in
                ("videos", "frames_min", "frames_max", "height", "width", "extract_noise", "seed") if k in kv}
        if "depth_token_dim" in kv:
            ints["depth_token_dim"] = int(kv["depth_token_dim"])
        return cls(domain=kv.get("domain", "A"), **ints)

    def to_text(self) -> str:
        lines = [f"videos={self.videos}", f"frames_min={self.frames_min}",
                 f"frames_max={self.frames_max}", f"height={self.height}",
                 f"width={self.width}", f"domain={self.domain}",
                 f"extract_noise={self.extract_noise}", f"seed={self.seed}",
                 f"depth_token_dim={self.depth_token_dim}"]
        return "\n".join(lines) + "\n"


def _spawn(iid: int, rng: np.random.Generator, w: int, h: int) -> InstanceState:
    scale = min(w, h)
    if iid in _ELLIPSES:
        lo, hi = _ELLIPSES[iid]
        extent = scale * rng.uniform(lo, hi)
        b = 0.62 * extent
        cx = rng.uniform(extent, w - 1 - extent)
        base = 0.30 * h if iid == int(InstanceId.GALLBLADDER) else 0.68 * h
        cy = float(np.clip(base + rng.uniform(-0.08, 0.08) * h, b, h - 1 - b))
        anchor = None
    else:
        extent = max(1.4, scale * _CAPSULE_RADIUS[iid])
        side = _ENTRY_SIDE[iid]
        frac = rng.uniform(0.2, 0.8)
        anchor = {"left": (0.0, frac * (h - 1)), "right": (float(w - 1), frac * (h - 1)),
                  "top": (frac * (w - 1), 0.0)}[side]
        cx = rng.uniform(0.3 * w, 0.7 * w)
        cy = rng.uniform(0.3 * h, 0.7 * h)
    speed = 0.015 * scale
    vel = (rng.uniform(-speed, speed), rng.uniform(-speed, speed))
    return InstanceState(center=(cx, cy), extent=extent, plane=0.0, velocity=vel, anchor=anchor)


def _advance(inst: InstanceState, iid: int, w: int, h: int) -> InstanceState:
    cx, cy = inst.center
    vx, vy = inst.velocity
    cx, cy = cx + vx, cy + vy
    if iid in _ELLIPSES:
        mx, my = inst.extent, 0.62 * inst.extent
    else:
        mx = my = inst.extent
    if not mx <= cx <= w - 1 - mx:
        vx = -vx
        cx = float(np.clip(cx, mx, w - 1 - mx))
    if not my <= cy <= h - 1 - my:
        vy = -vy
        cy = float(np.clip(cy, my, h - 1 - my))
    return replace(inst, center=(cx, cy), velocity=(vx, vy))


def simulate_scene_states(track: np.ndarray, grammar: PhaseGrammar,
                          rng: np.random.Generator, width: int, height: int) -> list[SceneState]:
    """Scene state per frame: spawn/retire instances at phase changes, drift within."""
    planes = (rng.permutation(N_INSTANCES) + rng.uniform(0.2, 0.8, N_INSTANCES)) / N_INSTANCES
    states: list[SceneState] = []
    current: dict[int, InstanceState] = {}
    prev_phase = -1
    for phase in track:
        if phase != prev_phase:
            rule = grammar.rules[phase]
            wanted = set(rule.required)
            for iid in sorted(rule.optional):
                if rng.random() < rule.optional_prob:
                    wanted.add(iid)
            current = {iid: st for iid, st in current.items() if iid in wanted}
            for iid in sorted(wanted - set(current)):
                st = _spawn(int(iid), rng, width, height)
                current[int(iid)] = replace(st, plane=float(planes[int(iid) - 1]))
            prev_phase = phase
        else:
            current = {iid: _advance(st, iid, width, height) for iid, st in current.items()}
        states.append(SceneState(width=width, height=height,
                                 instances={k: v for k, v in current.items()}))
    return states


def generate_video(config: GenConfig, index: int, grammar: PhaseGrammar,
                   projector: TokenProjector) -> VideoSequence:
    """One fully deterministic video: phases, geometry, appearance, DT payloads."""
    video_id = f"video_{index:03d}"
    vseed = derive_seed(config.seed, "video", index)
    track = phase_track(derive_seed(vseed, "phases"), grammar)
    rng_geom = np.random.default_rng(derive_seed(vseed, "geometry"))
    rng_app = np.random.default_rng(derive_seed(vseed, "appearance", config.domain))
    noise = ExtractionNoise.from_severity(config.extract_noise)

    domain = appearance_domain(config.domain, rng_app)
    states = simulate_scene_states(track, grammar, rng_geom, config.width, config.height)

    frames: list[DTFrame] = []
    rgb_stack = np.empty((len(track), config.height, config.width, 3), dtype=np.uint8)
    flicker_phase = 2.0 * math.pi * rng_app.random()
    for t, (phase, state) in enumerate(zip(track, states)):
        illum = domain.illumination * (1.0 + 0.04 * math.sin(2.0 * math.pi * t / 60.0 + flicker_phase))
        rgb, masks, disparity = render_frame(state, replace(domain, illumination=illum))
        table, depth_token = pseudo_tokens(masks, disparity, projector)
        frame = DTFrame(masks, disparity, table.astype(np.float32),
                        depth_token.astype(np.float32), int(phase))
        if noise.severity > 0:
            frame = apply_extraction_noise(frame, noise,
                                           derive_seed(vseed, "extraction", t), projector)
        frames.append(frame)
        rgb_stack[t] = rgb
    return VideoSequence(video_id=video_id, domain=config.domain, seed=vseed,
                         frames=frames, rgb=rgb_stack)


def generate_dataset(config: GenConfig, out_dir, threads: int = 1) -> list[ManifestRow]:
    """Write N DTSEQ files plus manifest.tsv; byte-identical for equal (config, seed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grammar = default_grammar(config.frames_min, config.frames_max)
    projector = TokenProjector.from_seed(derive_seed(config.seed, "token-projection"),
                                         config.depth_token_dim)

    def build(i: int) -> ManifestRow:
        seq = generate_video(config, i, grammar, projector)
        fname = f"{seq.video_id}.dtseq"
        write_dtseq(seq, out / fname)
        return ManifestRow(seq.video_id, fname, seq.domain, seq.seed, seq.n_frames)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(build, range(config.videos)))
    else:
        rows = [build(i) for i in range(config.videos)]
    write_manifest(rows, out)
    return rows
