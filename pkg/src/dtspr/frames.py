"""Digital-twin frame data model, validation, and the DTSEQ file format.

A DT frame carries 10 binary instance masks, a disparity map normalized to
[0, 1], a 10x257 mask-token table (256 token values plus an existence flag
per instance), a depth token, and the frame's phase label.  Frames are
stored float32 in memory and on disk; the nn engine converts to float64 at
its own boundary.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_INSTANCES = 10
N_PHASES = 7
MASK_TOKEN_LEN = 257  # 256 token values + existence flag

DTSEQ_MAGIC = b"DTSQ"
DTSEQ_VERSION = 1


class InstanceId(enum.IntEnum):
    """The 10 tracked instance classes (one tissue, one bag, 8 instrument slots)."""

    GALLBLADDER = 1
    LEFT_GRASPER = 2
    TOP_GRASPER = 3
    RIGHT_GRASPER = 4
    BIPOLAR = 5
    HOOK = 6
    SCISSORS = 7
    CLIPPER = 8
    IRRIGATOR = 9
    SPECIMEN_BAG = 10


def check_phase(phase: int) -> int:
    if not 0 <= int(phase) < N_PHASES:
        raise ValueError(f"phase must be in 0..{N_PHASES - 1}, got {phase}")
    return int(phase)


@dataclass(frozen=True)
class MaskTokenEntry:
    """One instance's token: 256 values plus an existence flag in {0, 1}."""

    token: np.ndarray
    exists: float

    @classmethod
    def from_row(cls, row: np.ndarray) -> "MaskTokenEntry":
        if row.shape != (MASK_TOKEN_LEN,):
            raise ValueError(f"mask-token row must have length {MASK_TOKEN_LEN}")
        return cls(token=row[:256], exists=float(row[256]))


@dataclass
class DTFrame:
    """Per-frame digital twin payload.

    masks: (10, H, W) uint8 in {0, 1}, ordered by InstanceId.
    disparity: (H, W) float32 in [0, 1]; larger means nearer.
    mask_tokens: (10, 257) float32; column 256 is the existence flag.
    depth_token: (D,) float32.
    phase: int in 0..6.
    """

    masks: np.ndarray
    disparity: np.ndarray
    mask_tokens: np.ndarray
    depth_token: np.ndarray
    phase: int

    @property
    def height(self) -> int:
        return self.disparity.shape[0]

    @property
    def width(self) -> int:
        return self.disparity.shape[1]

    def mask_token_entry(self, instance: InstanceId | int) -> MaskTokenEntry:
        return MaskTokenEntry.from_row(self.mask_tokens[int(instance) - 1])

    def copy(self) -> "DTFrame":
        return DTFrame(self.masks.copy(), self.disparity.copy(),
                       self.mask_tokens.copy(), self.depth_token.copy(), self.phase)


@dataclass
class VideoSequence:
    """Ordered DT frames with optional per-frame RGB and video metadata.

    rgb is (T, H, W, 3) uint8 or None; all frames share H x W.
    """

    video_id: str
    domain: str
    seed: int
    frames: list[DTFrame]
    rgb: np.ndarray | None = None

    def __post_init__(self):
        if self.domain not in ("A", "B"):
            raise ValueError(f"domain must be 'A' or 'B', got {self.domain!r}")
        if len(self.frames) < 1:
            raise ValueError("a video sequence needs T >= 1 frames")

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def has_rgb(self) -> bool:
        return self.rgb is not None

    def phases(self) -> np.ndarray:
        return np.array([f.phase for f in self.frames], dtype=np.int64)


class FrameStructureError(Exception):
    """Raised when a frame's arrays cannot be assembled into a tensor."""


@dataclass(frozen=True)
class Diagnostic:
    """One invariant violation found by validate_frame."""

    kind: str
    severity: str  # "error" or "warning"
    message: str

    def __str__(self) -> str:
        return f"[{self.severity}] {self.kind}: {self.message}"


def validate_frame(frame: DTFrame) -> list[Diagnostic]:
    """Check every DTFrame invariant; empty list means the frame is valid.

    At most one diagnostic is emitted per invariant kind, naming the first
    offending location.  Existence-flag/mask disagreement is only a warning:
    ingested data may carry tokens whose flag disagrees with the mask.
    """
    out: list[Diagnostic] = []

    def err(kind, msg):
        out.append(Diagnostic(kind, "error", msg))

    if frame.masks.ndim != 3 or frame.masks.shape[0] != N_INSTANCES:
        err("mask_shape", f"masks must be ({N_INSTANCES}, H, W), got {frame.masks.shape}")
        return out
    if frame.disparity.ndim != 2:
        err("disparity_shape", f"disparity must be 2-D, got shape {frame.disparity.shape}")
        return out
    if frame.masks.shape[1:] != frame.disparity.shape:
        err("mask_shape", f"masks are {frame.masks.shape[1:]}, disparity is {frame.disparity.shape}")
        return out

    nonbinary = (frame.masks != 0) & (frame.masks != 1)
    if nonbinary.any():
        c, y, x = np.argwhere(nonbinary)[0]
        err("mask_binary", f"mask value {frame.masks[c, y, x]} not in {{0,1}} at channel {c}, ({y},{x})")

    bad_disp = ~((frame.disparity >= 0.0) & (frame.disparity <= 1.0))
    if bad_disp.any():
        y, x = np.argwhere(bad_disp)[0]
        err("disparity_range", f"disparity out of [0,1] at ({y},{x}): {frame.disparity[y, x]}")

    if frame.mask_tokens.shape != (N_INSTANCES, MASK_TOKEN_LEN):
        err("token_shape", f"mask_tokens must be ({N_INSTANCES}, {MASK_TOKEN_LEN}), got {frame.mask_tokens.shape}")
    else:
        if not np.isfinite(frame.mask_tokens).all():
            i, j = np.argwhere(~np.isfinite(frame.mask_tokens))[0]
            err("token_nonfinite", f"non-finite mask-token value at entry {i}, column {j}")
        flags = frame.mask_tokens[:, 256]
        bad_flag = ~np.isin(flags, (0.0, 1.0))
        if bad_flag.any():
            i = int(np.argwhere(bad_flag)[0][0])
            err("exists_value", f"existence flag {flags[i]} not in {{0,1}} at entry {i}")
        else:
            nonempty = frame.masks.any(axis=(1, 2))
            mismatch = nonempty != (flags == 1.0)
            if mismatch.any():
                i = int(np.argwhere(mismatch)[0][0])
                out.append(Diagnostic(
                    "exists_mismatch", "warning",
                    f"entry {i}: mask {'has' if nonempty[i] else 'has no'} pixels but exists flag is {flags[i]:g}"))

    if frame.depth_token.ndim != 1:
        err("depth_token_shape", f"depth token must be 1-D, got shape {frame.depth_token.shape}")
    elif not np.isfinite(frame.depth_token).all():
        i = int(np.argwhere(~np.isfinite(frame.depth_token))[0][0])
        err("depth_token_nonfinite", f"non-finite depth-token value at index {i}")

    if not 0 <= frame.phase < N_PHASES:
        err("phase_range", f"phase {frame.phase} not in 0..{N_PHASES - 1}")

    return out


def onehot_stack(frame: DTFrame) -> np.ndarray:
    """Stack the 10 instance masks plus disparity into an (11, H, W) float32 tensor.

    Channels 0..9 are the masks in InstanceId order; channel 10 is disparity.
    """
    if frame.masks.ndim != 3 or frame.masks.shape[0] != N_INSTANCES:
        raise FrameStructureError(f"expected {N_INSTANCES} mask channels, got shape {frame.masks.shape}")
    for c in range(N_INSTANCES):
        if frame.masks[c].shape != frame.disparity.shape:
            raise FrameStructureError(
                f"mask channel {c} is {frame.masks[c].shape}, disparity is {frame.disparity.shape}")
    out = np.empty((N_INSTANCES + 1,) + frame.disparity.shape, dtype=np.float32)
    out[:N_INSTANCES] = frame.masks
    out[N_INSTANCES] = frame.disparity
    return out


def unstack(tensor: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of onehot_stack: recover (masks uint8, disparity float32)."""
    if tensor.ndim != 3 or tensor.shape[0] != N_INSTANCES + 1:
        raise FrameStructureError(f"expected ({N_INSTANCES + 1}, H, W), got {tensor.shape}")
    return tensor[:N_INSTANCES].astype(np.uint8), tensor[N_INSTANCES].astype(np.float32)


# ---------------------------------------------------------------------------
# DTSEQ serialization


class DtseqFormatError(Exception):
    """Malformed DTSEQ payload (bad magic, version, or truncation)."""


def write_dtseq(seq: VideoSequence, path) -> None:
    """Serialize a sequence to the DTSEQ binary format (little-endian).

    Header: magic | version u8 | flags u8 (bit0 has_rgb) | H u16 | W u16 |
    T u32 | K u8 | D_tok u16 | D_depth u16 | domain u8 | seed u64 |
    video_id (u16 length + UTF-8).  Then per frame: phase u8, rgb bytes when
    present, channel-major masks, disparity f32, mask tokens f32, depth f32.
    """
    h, w, t = seq.height, seq.width, seq.n_frames
    d_depth = seq.frames[0].depth_token.shape[0]
    if h > 0xFFFF or w > 0xFFFF:
        raise DtseqFormatError(f"frame size {h}x{w} overflows the u16 header fields")
    if t > 0xFFFFFFFF:
        raise DtseqFormatError("frame count overflows the u32 header field")
    if d_depth > 0xFFFF:
        raise DtseqFormatError("depth token length overflows the u16 header field")
    vid = seq.video_id.encode("utf-8")
    if len(vid) > 0xFFFF:
        raise DtseqFormatError("video id too long")

    parts = [DTSEQ_MAGIC,
             struct.pack("<BBHHIBHHBQ", DTSEQ_VERSION, 1 if seq.has_rgb else 0,
                         h, w, t, N_INSTANCES, MASK_TOKEN_LEN, d_depth,
                         0 if seq.domain == "A" else 1, seq.seed & 0xFFFFFFFFFFFFFFFF),
             struct.pack("<H", len(vid)), vid]
    for i, f in enumerate(seq.frames):
        if f.disparity.shape != (h, w):
            raise DtseqFormatError(f"frame {i} is {f.disparity.shape}, expected ({h}, {w})")
        parts.append(struct.pack("<B", check_phase(f.phase)))
        if seq.has_rgb:
            parts.append(np.ascontiguousarray(seq.rgb[i], dtype=np.uint8).tobytes())
        parts.append(np.ascontiguousarray(f.masks, dtype=np.uint8).tobytes())
        parts.append(np.ascontiguousarray(f.disparity, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(f.mask_tokens, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(f.depth_token, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def dtseq_file_size(h: int, w: int, t: int, d_depth: int, video_id: str, has_rgb: bool) -> int:
    """Exact byte size a write_dtseq call will produce for these dimensions."""
    header = 4 + struct.calcsize("<BBHHIBHHBQ") + 2 + len(video_id.encode("utf-8"))
    frame = 1 + (3 * h * w if has_rgb else 0) + N_INSTANCES * h * w \
        + 4 * h * w + 4 * N_INSTANCES * MASK_TOKEN_LEN + 4 * d_depth
    return header + t * frame


def read_dtseq(path) -> VideoSequence:
    """Parse a DTSEQ file; exact inverse of write_dtseq.

    Validates magic, version, and payload length before building frames;
    truncation errors report the byte offset where data ran out.
    """
    raw = Path(path).read_bytes()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise DtseqFormatError(f"truncated file: needed {n} bytes for {what} at byte offset {off}")
        piece = raw[off:off + n]
        off += n
        return piece

    if take(4, "magic") != DTSEQ_MAGIC:
        raise DtseqFormatError("bad magic: not a DTSEQ file")
    version, flags, h, w, t, k, d_tok, d_depth, domain_code, seed = \
        struct.unpack("<BBHHIBHHBQ", take(struct.calcsize("<BBHHIBHHBQ"), "header"))
    if version != DTSEQ_VERSION:
        raise DtseqFormatError(f"unsupported DTSEQ version {version}")
    if k != N_INSTANCES or d_tok != MASK_TOKEN_LEN:
        raise DtseqFormatError(f"unexpected table dims K={k}, D_tok={d_tok}")
    if t < 1:
        raise DtseqFormatError("header declares T = 0; a sequence needs T >= 1")
    (vid_len,) = struct.unpack("<H", take(2, "video id length"))
    video_id = take(vid_len, "video id").decode("utf-8")
    has_rgb = bool(flags & 1)

    frames: list[DTFrame] = []
    rgb = np.empty((t, h, w, 3), dtype=np.uint8) if has_rgb else None
    for i in range(t):
        phase = take(1, f"phase of frame {i}")[0]
        if has_rgb:
            rgb[i] = np.frombuffer(take(3 * h * w, f"rgb of frame {i}"), dtype=np.uint8).reshape(h, w, 3)
        masks = np.frombuffer(take(N_INSTANCES * h * w, f"masks of frame {i}"),
                              dtype=np.uint8).reshape(N_INSTANCES, h, w).copy()
        disparity = np.frombuffer(take(4 * h * w, f"disparity of frame {i}"),
                                  dtype="<f4").reshape(h, w).astype(np.float32)
        mask_tokens = np.frombuffer(take(4 * N_INSTANCES * MASK_TOKEN_LEN, f"mask tokens of frame {i}"),
                                    dtype="<f4").reshape(N_INSTANCES, MASK_TOKEN_LEN).astype(np.float32)
        depth_token = np.frombuffer(take(4 * d_depth, f"depth token of frame {i}"),
                                    dtype="<f4").astype(np.float32)
        frames.append(DTFrame(masks, disparity, mask_tokens, depth_token, int(phase)))
    if off != len(raw):
        raise DtseqFormatError(f"{len(raw) - off} trailing bytes after frame {t - 1} (offset {off})")
    return VideoSequence(video_id=video_id, domain="A" if domain_code == 0 else "B",
                         seed=int(seed), frames=frames, rgb=rgb)


def sequences_equal(a: VideoSequence, b: VideoSequence) -> bool:
    """Field-for-field equality, bit-exact on floats."""
    if (a.video_id, a.domain, a.seed, a.n_frames, a.has_rgb) != \
       (b.video_id, b.domain, b.seed, b.n_frames, b.has_rgb):
        return False
    if a.has_rgb and not np.array_equal(a.rgb, b.rgb):
        return False
    for fa, fb in zip(a.frames, b.frames):
        if fa.phase != fb.phase:
            return False
        for xa, xb in ((fa.masks, fb.masks), (fa.disparity, fb.disparity),
                       (fa.mask_tokens, fb.mask_tokens), (fa.depth_token, fb.depth_token)):
            if xa.shape != xb.shape or not np.array_equal(
                    xa.view(np.uint8) if xa.dtype == np.uint8 else xa.view(np.uint32),
                    xb.view(np.uint8) if xb.dtype == np.uint8 else xb.view(np.uint32)):
                return False
    return True


# ---------------------------------------------------------------------------
# dataset directory layout

MANIFEST_NAME = "manifest.tsv"
MANIFEST_COLUMNS = ("video_id", "file", "domain", "seed", "T")


@dataclass
class ManifestRow:
    video_id: str
    file: str
    domain: str
    seed: int
    n_frames: int


def write_manifest(rows: list[ManifestRow], dataset_dir) -> None:
    lines = ["\t".join(MANIFEST_COLUMNS)]
    for r in rows:
        lines.append(f"{r.video_id}\t{r.file}\t{r.domain}\t{r.seed}\t{r.n_frames}")
    (Path(dataset_dir) / MANIFEST_NAME).write_text("\n".join(lines) + "\n")


def read_manifest(dataset_dir) -> list[ManifestRow]:
    path = Path(dataset_dir) / MANIFEST_NAME
    lines = path.read_text().splitlines()
    if not lines or tuple(lines[0].split("\t")) != MANIFEST_COLUMNS:
        raise DtseqFormatError(f"{path}: bad manifest header")
    rows = []
    for ln in lines[1:]:
        vid, fname, domain, seed, t = ln.split("\t")
        rows.append(ManifestRow(vid, fname, domain, int(seed), int(t)))
    return rows


def load_dataset(dataset_dir) -> list[VideoSequence]:
    """Read every sequence listed in a dataset directory's manifest."""
    base = Path(dataset_dir)
    return [read_dtseq(base / row.file) for row in read_manifest(base)]
