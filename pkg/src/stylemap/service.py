"""HTTP editing service.

Images travel as base64 PNG inside JSON. /project runs the encoder once
and stores the latents in an LRU session store; the editing endpoints
work purely on stored latents, so given one checkpoint the responses
are deterministic functions of the request.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import threading
import time
from collections import OrderedDict

import torch
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from stylemap import editing
from stylemap.data import decode_image, decode_mask, encode_image

MAX_IMAGE_BYTES = 16 * 1024 * 1024
MAX_IMAGE_SIDE = 1024


class SessionStore:
    """Thread-safe LRU of projection sessions."""

    def __init__(self, capacity: int = 64):
        if capacity < 2:
            raise ValueError("session store needs room for at least two sessions")
        self.capacity = capacity
        self._lock = threading.Lock()
        self._items: OrderedDict[str, dict] = OrderedDict()

    def put(self, sid: str, record: dict) -> None:
        with self._lock:
            self._items[sid] = record
            self._items.move_to_end(sid)
            while len(self._items) > self.capacity:
                self._items.popitem(last=False)

    def get(self, sid: str) -> dict | None:
        with self._lock:
            record = self._items.get(sid)
            if record is not None:
                self._items.move_to_end(sid)
            return record

    def __len__(self):
        with self._lock:
            return len(self._items)


class ProjectRequest(BaseModel):
    image: str


class EditRequest(BaseModel):
    original_id: str
    reference_id: str
    mask: str
    space: str = "wplus"


class InterpolateRequest(BaseModel):
    id_a: str
    id_b: str
    t: float


class Box(BaseModel):
    top: int
    left: int
    height: int
    width: int

    def tup(self):
        return (self.top, self.left, self.height, self.width)


class BoxPair(BaseModel):
    src: Box
    dst: Box


class TransplantRequest(BaseModel):
    original_id: str
    reference_id: str
    boxes: list[BoxPair]


class SemanticRequest(BaseModel):
    id: str
    direction: str
    strength: float
    region: str | None = None


def _b64_bytes(field: str, value: str) -> bytes:
    try:
        data = base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(status_code=400, detail=f"{field} is not valid base64")
    if len(data) > MAX_IMAGE_BYTES:
        raise HTTPException(status_code=413, detail=f"{field} exceeds {MAX_IMAGE_BYTES} bytes")
    return data


def _b64_image(data: bytes) -> str:
    return base64.b64encode(data).decode()


def create_app(
    model: editing.EditModel,
    directions: dict[str, torch.Tensor] | None = None,
    capacity: int = 64,
    info: dict | None = None,
) -> FastAPI:
    app = FastAPI(title="stylemap editing service")
    store = SessionStore(capacity)
    size = model.net.image_size
    directions = directions or {}
    # Spread of the mapped distribution along each direction, fixed at
    # startup so strengths mean the same thing for every request.
    scales = {name: editing.direction_scale(model.mapping, d) for name, d in directions.items()}

    def _decode_image_checked(field: str, b64: str) -> tuple[bytes, torch.Tensor]:
        raw = _b64_bytes(field, b64)
        from PIL import Image, UnidentifiedImageError
        import io

        try:
            probe = Image.open(io.BytesIO(raw))
            probe.load()
        except (UnidentifiedImageError, OSError):
            raise HTTPException(status_code=400, detail=f"{field} is not a decodable image")
        if probe.width > MAX_IMAGE_SIDE or probe.height > MAX_IMAGE_SIDE:
            raise HTTPException(
                status_code=413,
                detail=f"{field} is {probe.width}x{probe.height}; limit is {MAX_IMAGE_SIDE}",
            )
        try:
            tensor = decode_image(raw, size)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return raw, tensor

    def _session(field: str, sid: str) -> dict:
        record = store.get(sid)
        if record is None:
            raise HTTPException(status_code=404, detail=f"{field} {sid!r} is unknown or expired")
        return record

    def _mask(field: str, b64: str) -> torch.Tensor:
        raw = _b64_bytes(field, b64)
        try:
            return decode_mask(raw, size)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))

    def _render(w: torch.Tensor | None = None, pyramid=None) -> str:
        img = model.decode(w) if w is not None else model.decode_pyramid(pyramid)
        return _b64_image(encode_image(img[0]))

    @app.get("/health")
    def health():
        return dict(info or {}, status="ok", image_size=size, sessions=len(store),
                    directions=sorted(directions))

    @app.post("/project")
    def project(req: ProjectRequest):
        raw, x = _decode_image_checked("image", req.image)
        sid = hashlib.sha256(raw).hexdigest()[:16]
        w = model.encode(x[None])
        pyramid = model.resize(w)
        recon_png = encode_image(model.decode_pyramid(pyramid)[0])
        store.put(sid, {
            "stylemap": w,
            "pyramid": pyramid,
            "thumbnail": recon_png,
            "created_at": time.time(),
        })
        return {"id": sid, "reconstruction": _b64_image(recon_png)}

    @app.post("/edit")
    def edit(req: EditRequest):
        a = _session("original_id", req.original_id)
        b = _session("reference_id", req.reference_id)
        mask = _mask("mask", req.mask)
        if req.space == "wplus":
            pyramid = editing.blend_wplus(a["pyramid"], b["pyramid"], mask)
            return {"image": _render(pyramid=pyramid)}
        if req.space == "w":
            coarse = editing.shrink_mask(mask, model.net.stylemap_hw)
            blended = editing.blend_w(a["stylemap"], b["stylemap"], coarse)
            return {"image": _render(w=blended)}
        raise HTTPException(status_code=400, detail=f"unknown edit space {req.space!r}")

    @app.post("/interpolate")
    def interpolate(req: InterpolateRequest):
        a = _session("id_a", req.id_a)
        b = _session("id_b", req.id_b)
        try:
            w = editing.interpolate(a["stylemap"], b["stylemap"], req.t)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return {"image": _render(w=w)}

    @app.post("/transplant")
    def transplant(req: TransplantRequest):
        a = _session("original_id", req.original_id)
        b = _session("reference_id", req.reference_id)
        src = [p.src.tup() for p in req.boxes]
        dst = [p.dst.tup() for p in req.boxes]
        try:
            w = editing.transplant(a["stylemap"], b["stylemap"], src, dst)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return {"image": _render(w=w)}

    @app.post("/semantic")
    def semantic(req: SemanticRequest):
        record = _session("id", req.id)
        if req.direction not in directions:
            raise HTTPException(status_code=404, detail=f"unknown direction {req.direction!r}")
        direction = directions[req.direction]
        region = None
        if req.region is not None:
            region = editing.shrink_mask(_mask("region", req.region), model.net.stylemap_hw)
        strength = req.strength * scales[req.direction]
        try:
            w = editing.semantic_edit(record["stylemap"], direction, strength, region)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return {"image": _render(w=w)}

    return app


def load_directions(path: str) -> dict[str, torch.Tensor]:
    """Reads named semantic directions from <path>/<name>.npy files."""
    import os

    import numpy as np

    out = {}
    for name in sorted(os.listdir(path)):
        if not name.endswith(".npy"):
            continue
        arr = np.load(os.path.join(path, name))
        out[name[:-4]] = torch.from_numpy(arr.astype("float32"))
    return out
