"""二进制检查点

布局（小端）：
    magic  8 字节 "M3KGCKPT"
    version u32
    count   u32
    每个张量：name_len u32, name utf-8, dtype u8 (0=f32, 1=f64), rank u8, dims u32×rank, 行优先数据
"""

import struct
from pathlib import Path
from typing import Dict

import numpy as np
from loguru import logger

from ..common.errors import CheckpointError

MAGIC = b"M3KGCKPT"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def encode_tensors(tensors: Dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        arr = np.asarray(value)
        if arr.dtype not in DTYPE_CODES:
            arr = arr.astype(np.float64)
        code = DTYPE_CODES[arr.dtype]
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<BB", code, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes())
    return b"".join(chunks)


def decode_tensors(data: bytes, source: str = "<bytes>") -> Dict[str, np.ndarray]:
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"检查点截断: {source} (偏移 {pos}, 需要 {n} 字节)")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(len(MAGIC))) != MAGIC:
        raise CheckpointError(f"不是检查点文件（magic 不匹配）: {source}")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"不支持的检查点版本 {version}: {source}")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        code, rank = struct.unpack("<BB", take(2))
        if code not in DTYPES:
            raise CheckpointError(f"张量 {name} 的 dtype 编码未知: {code}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        dtype = DTYPES[code]
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(bytes(take(size * dtype.itemsize)), dtype=dtype).reshape(dims)
        tensors[name] = arr.astype(dtype.newbyteorder("="))
    if pos != len(view):
        raise CheckpointError(f"检查点末尾有多余数据: {source}")
    return tensors


def save_checkpoint(path: str, tensors: Dict[str, np.ndarray]) -> None:
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_bytes(encode_tensors(tensors))
    logger.info(f"检查点已保存: {file_path} ({len(tensors)} 个张量)")


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    file_path = Path(path)
    if not file_path.exists():
        raise CheckpointError(f"检查点文件不存在: {file_path}")
    tensors = decode_tensors(file_path.read_bytes(), str(file_path))
    logger.info(f"检查点已加载: {file_path} ({len(tensors)} 个张量)")
    return tensors
