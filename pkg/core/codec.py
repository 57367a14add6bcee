"""
Binary encoding of LocalUpdates and RoundRecords, and the trace replay dump.

All integers and reals are little-endian 64-bit. Every update is written as a
u32 body length followed by the body:
    client_id i64, base_round i64, payload tag u8, payload length u32,
    payload f64[], eta_used f64, similarity f64, feedback u8, n_i i64
"""
import struct
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from .config import REPLAY_MAGIC
from .errors import FedQSError
from .models import LocalUpdate, ParamVec, PayloadKind, RoundRecord, Trace

_TAGS = {PayloadKind.PSEUDO_GRAD: 0, PayloadKind.PARAMS: 1}
_KINDS = {v: k for k, v in _TAGS.items()}
_HEAD = struct.Struct("<qqBI")
_TAIL = struct.Struct("<dd?q")
_RECORD = struct.Struct("<qddddqdd")
_LEN = struct.Struct("<I")


def encode_update(u: LocalUpdate) -> bytes:
    payload = np.ascontiguousarray(u.payload, dtype="<f8")
    body = (
        _HEAD.pack(u.client_id, u.base_round, _TAGS[u.payload_kind], payload.shape[0])
        + payload.tobytes()
        + _TAIL.pack(u.eta_used, u.similarity, u.feedback, u.n_i)
    )
    return _LEN.pack(len(body)) + body


def decode_update(data: bytes, offset: int = 0) -> Tuple[LocalUpdate, int]:
    """Decode one update starting at offset; returns it and the offset after it."""
    if offset + _LEN.size > len(data):
        raise FedQSError(f"truncated update record at byte {offset}")
    (length,) = _LEN.unpack_from(data, offset)
    start = offset + _LEN.size
    if start + length > len(data) or length < _HEAD.size + _TAIL.size:
        raise FedQSError(f"truncated update record at byte {offset}")
    client_id, base_round, tag, count = _HEAD.unpack_from(data, start)
    if tag not in _KINDS:
        raise FedQSError(f"unknown payload tag {tag} in update record at byte {offset}")
    vec_start = start + _HEAD.size
    end = start + length
    if vec_start + 8 * count + _TAIL.size != end:
        raise FedQSError(f"corrupt update record at byte {offset}: payload length {count} does not fit")
    payload = np.frombuffer(data, dtype="<f8", count=count, offset=vec_start).astype(np.float64)
    eta_used, sim, feedback, n_i = _TAIL.unpack_from(data, vec_start + 8 * count)
    update = LocalUpdate(
        client_id=client_id, base_round=base_round, payload_kind=_KINDS[tag], payload=payload,
        eta_used=eta_used, similarity=sim, feedback=feedback, n_i=n_i,
    )
    return update, end


def encode_record(r: RoundRecord) -> bytes:
    return _RECORD.pack(r.round, r.vtime, r.test_acc, r.test_loss, r.mean_staleness, r.num_feedback, r.f_bar, r.s_bar)


def decode_record(data: bytes, offset: int = 0) -> Tuple[RoundRecord, int]:
    fields = _RECORD.unpack_from(data, offset)
    return RoundRecord(*fields), offset + _RECORD.size


def dump_replay(trace: Trace, path: Union[str, Path]) -> None:
    """
    Write initial params, then per round: update count, the aggregated updates,
    and the round record. Needs a trace run with keep_updates.
    """
    if trace.initial_params is None or len(trace.batches) != len(trace.records):
        raise FedQSError("trace has no replay data; run with keep_updates enabled")
    init = np.ascontiguousarray(trace.initial_params, dtype="<f8")
    chunks = [REPLAY_MAGIC, _LEN.pack(init.shape[0]), init.tobytes(), _LEN.pack(len(trace.records))]
    for batch, record in zip(trace.batches, trace.records):
        chunks.append(_LEN.pack(len(batch)))
        chunks.extend(encode_update(u) for u in batch)
        chunks.append(encode_record(record))
    path = Path(path)
    try:
        path.write_bytes(b"".join(chunks))
    except OSError as exc:
        raise FedQSError(f"cannot write replay dump {path}: {exc}") from exc


def load_replay(path: Union[str, Path]) -> Tuple[ParamVec, List[List[LocalUpdate]], List[RoundRecord]]:
    data = Path(path).read_bytes()
    if not data.startswith(REPLAY_MAGIC):
        raise FedQSError(f"{path} is not a replay dump")
    offset = len(REPLAY_MAGIC)
    (dim,) = _LEN.unpack_from(data, offset)
    offset += _LEN.size
    initial = np.frombuffer(data, dtype="<f8", count=dim, offset=offset).astype(np.float64)
    offset += 8 * dim
    (rounds,) = _LEN.unpack_from(data, offset)
    offset += _LEN.size
    batches, records = [], []
    for _ in range(rounds):
        (size,) = _LEN.unpack_from(data, offset)
        offset += _LEN.size
        batch = []
        for _ in range(size):
            update, offset = decode_update(data, offset)
            batch.append(update)
        record, offset = decode_record(data, offset)
        batches.append(batch)
        records.append(record)
    return initial, batches, records
