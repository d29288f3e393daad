"""Scene file formats.

* Splat PLY: binary little-endian, one ``vertex`` element with float32
  properties ``x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2
  rot_0..3`` (the de-facto splat layout; normals are ignored on read and
  zero-filled on write). ``f_rest`` is channel-major: 15 coefficients for
  R, then G, then B. Optional extra properties ``frame_0..3`` carry the
  appearance-frame quaternion; absent means identity.
* Camera sidecar (<stem>.cameras.txt): text records per view with the
  view id, 3x3 K row-major, 4x4 cam-to-world row-major, width, height.
* Feature sidecar (<stem>.features.bin): 8-byte header (magic ``GF``,
  uint32 N, uint16 D), then N*D little-endian float32.
* Masks: one 16-bit grayscale PNG per view, pixel value = instance label.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import Camera
from .scene import Gaussians, Scene

FEATURE_MAGIC = b"GF"

PLY_BASE_PROPS = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(45)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)
FRAME_PROPS = [f"frame_{i}" for i in range(4)]


class SceneLoadError(Exception):
    pass


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def camera_sidecar_path(path: str | Path) -> Path:
    return _sidecar(Path(path), ".cameras.txt")


def feature_sidecar_path(path: str | Path) -> Path:
    return _sidecar(Path(path), ".features.bin")


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------


def _parse_ply_header(f) -> tuple[int, list[str]]:
    line = f.readline().strip()
    if line != b"ply":
        raise SceneLoadError("malformed PLY header: missing 'ply' magic")
    fmt = f.readline().strip()
    if fmt != b"format binary_little_endian 1.0":
        raise SceneLoadError(f"unsupported PLY format line: {fmt.decode(errors='replace')}")
    count = None
    props: list[str] = []
    while True:
        line = f.readline()
        if not line:
            raise SceneLoadError("malformed PLY header: no end_header")
        line = line.strip()
        if line == b"end_header":
            break
        parts = line.split()
        if parts[0] == b"comment":
            continue
        if parts[0] == b"element":
            if parts[1] != b"vertex":
                raise SceneLoadError(f"unexpected element: {parts[1].decode()}")
            count = int(parts[2])
        elif parts[0] == b"property":
            if parts[1] != b"float":
                raise SceneLoadError(
                    f"property {parts[2].decode()} is {parts[1].decode()}, expected float"
                )
            props.append(parts[2].decode())
    if count is None:
        raise SceneLoadError("malformed PLY header: no vertex element")
    return count, props


def read_splat_ply(path: str | Path) -> Gaussians:
    path = Path(path)
    with open(path, "rb") as f:
        count, props = _parse_ply_header(f)
        data = np.fromfile(f, dtype="<f4", count=count * len(props))
    if data.size != count * len(props):
        raise SceneLoadError(
            f"element count mismatch: header says {count} vertices, "
            f"payload holds {data.size // max(len(props), 1)}"
        )
    table = data.reshape(count, len(props))
    col = {name: i for i, name in enumerate(props)}
    for name in PLY_BASE_PROPS:
        if name.startswith(("nx", "ny", "nz")):
            continue
        if name not in col:
            raise SceneLoadError(f"missing property: {name}")

    def cols(names: list[str]) -> np.ndarray:
        return table[:, [col[n] for n in names]]

    positions = cols(["x", "y", "z"])
    f_dc = cols([f"f_dc_{i}" for i in range(3)])
    f_rest = cols([f"f_rest_{i}" for i in range(45)]).reshape(count, 3, 15)
    sh = np.concatenate([f_dc[:, None, :], f_rest.transpose(0, 2, 1)], axis=1)
    frames = None
    if all(n in col for n in FRAME_PROPS):
        frames = cols(FRAME_PROPS)
    return Gaussians(
        positions=positions,
        rotations=cols([f"rot_{i}" for i in range(4)]),
        log_scales=cols([f"scale_{i}" for i in range(3)]),
        opacity_logits=table[:, col["opacity"]],
        sh=sh,
        features=np.zeros((count, 0)),
        frames=frames,
    )


def write_splat_ply(path: str | Path, g: Gaussians, with_frames: bool | None = None) -> None:
    path = Path(path)
    n = len(g)
    if with_frames is None:
        with_frames = bool(np.any(np.abs(g.frames - np.array([1.0, 0, 0, 0])) > 1e-12))
    props = PLY_BASE_PROPS + (FRAME_PROPS if with_frames else [])
    table = np.zeros((n, len(props)), dtype="<f4")
    col = {name: i for i, name in enumerate(props)}
    table[:, [col["x"], col["y"], col["z"]]] = g.positions
    table[:, [col[f"f_dc_{i}"] for i in range(3)]] = g.sh[:, 0, :]
    rest = g.sh[:, 1:, :]
    if rest.shape[1] != 15:
        padded = np.zeros((n, 15, 3))
        padded[:, : rest.shape[1], :] = rest
        rest = padded
    table[:, [col[f"f_rest_{i}"] for i in range(45)]] = rest.transpose(0, 2, 1).reshape(n, 45)
    table[:, col["opacity"]] = g.opacity_logits
    table[:, [col[f"scale_{i}"] for i in range(3)]] = g.log_scales
    table[:, [col[f"rot_{i}"] for i in range(4)]] = g.rotations
    if with_frames:
        table[:, [col[f] for f in FRAME_PROPS]] = g.frames

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in props]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        table.tofile(f)


# ---------------------------------------------------------------------------
# Sidecars
# ---------------------------------------------------------------------------


def write_cameras(path: str | Path, cameras: list[Camera], background: np.ndarray) -> None:
    lines = ["# replicant cameras v1"]
    b = np.asarray(background, dtype=np.float64)
    lines.append("background " + " ".join(repr(float(v)) for v in b))
    for c in cameras:
        fields = (
            [str(c.view_id)]
            + [repr(float(v)) for v in c.K.ravel()]
            + [repr(float(v)) for v in c.cam_to_world.ravel()]
            + [str(c.width), str(c.height)]
        )
        lines.append(" ".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def read_cameras(path: str | Path) -> tuple[list[Camera], np.ndarray]:
    cameras = []
    background = np.zeros(3)
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "background":
            background = np.array([float(v) for v in parts[1:4]])
            continue
        if len(parts) != 1 + 9 + 16 + 2:
            raise SceneLoadError(f"malformed camera record: {line[:60]}")
        view_id = int(parts[0])
        k = np.array([float(v) for v in parts[1:10]]).reshape(3, 3)
        m = np.array([float(v) for v in parts[10:26]]).reshape(4, 4)
        w, h = int(parts[26]), int(parts[27])
        cameras.append(Camera(K=k, cam_to_world=m, width=w, height=h, view_id=view_id))
    return cameras, background


def write_features(path: str | Path, features: np.ndarray) -> None:
    features = np.ascontiguousarray(features, dtype="<f4")
    n, d = features.shape
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC + struct.pack("<IH", n, d))
        features.tofile(f)


def read_features(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(8)
        if len(head) != 8 or head[:2] != FEATURE_MAGIC:
            raise SceneLoadError("malformed feature sidecar header")
        n, d = struct.unpack("<IH", head[2:])
        data = np.fromfile(f, dtype="<f4", count=n * d)
    if data.size != n * d:
        raise SceneLoadError("feature sidecar payload truncated")
    return data.reshape(n, d).astype(np.float64)


# ---------------------------------------------------------------------------
# Scene-level entry points
# ---------------------------------------------------------------------------


def load_scene(path: str | Path, feature_dim: int = 16) -> Scene:
    """Load a PLY plus sidecars; missing features come back as zeros."""
    path = Path(path)
    g = read_splat_ply(path)
    cam_path = camera_sidecar_path(path)
    cameras: list[Camera] = []
    background = np.zeros(3)
    if cam_path.exists():
        cameras, background = read_cameras(cam_path)
    feat_path = feature_sidecar_path(path)
    if feat_path.exists():
        feats = read_features(feat_path)
        if len(feats) != len(g):
            raise SceneLoadError(
                f"feature sidecar holds {len(feats)} rows for {len(g)} gaussians"
            )
        g.features = feats
    else:
        g.features = np.zeros((len(g), feature_dim))
    return Scene(gaussians=g, cameras=cameras, background=background)


def save_scene(scene: Scene, path: str | Path, with_features: bool = True) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_splat_ply(path, scene.gaussians)
    write_cameras(camera_sidecar_path(path), scene.cameras, scene.background)
    if with_features and scene.gaussians.feature_dim > 0:
        write_features(feature_sidecar_path(path), scene.gaussians.features)


# ---------------------------------------------------------------------------
# Masks and images
# ---------------------------------------------------------------------------


def write_mask(path: str | Path, labels: np.ndarray) -> None:
    arr = np.asarray(labels)
    if arr.min() < 0 or arr.max() > np.iinfo(np.uint16).max:
        raise ValueError("mask labels out of uint16 range")
    Image.fromarray(arr.astype(np.uint16)).save(path)


def read_mask(path: str | Path) -> np.ndarray:
    img = Image.open(path)
    return np.asarray(img).astype(np.int32)


def write_png(path: str | Path, image: np.ndarray) -> None:
    """Write an RGB or grayscale float image in [0,1] as 8-bit PNG."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    Image.fromarray((arr * 255).round().astype(np.uint8)).save(path)


def write_raw_image(path: str | Path, image: np.ndarray) -> None:
    """Float32 raw dump with an (H, W, C) uint32 LE header."""
    arr = np.asarray(image, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[..., None]
    h, w, c = arr.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<III", h, w, c))
        arr.tofile(f)


def read_raw_image(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        h, w, c = struct.unpack("<III", f.read(12))
        data = np.fromfile(f, dtype="<f4", count=h * w * c)
    return data.reshape(h, w, c)
