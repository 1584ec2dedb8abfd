import numpy as np
import pytest
import torch

from unisep.codec import (
    CodecError,
    ConvCodec,
    chunk_layout,
    num_frames,
    overlap_add,
    segment_chunks,
)
from unisep.metrics import snr


def test_frame_count_formula():
    assert num_frames(16000, 16, 8) == 1999
    assert num_frames(160, 16, 8) == 19


def test_zero_waveform_encodes_to_zero():
    codec = ConvCodec(8, kernel_size=16, stride=8)
    out = codec.encode(torch.zeros(1, 160))
    assert out.shape == (1, 19, 8)
    assert torch.all(out == 0)


def test_encoder_output_nonnegative():
    torch.manual_seed(3)
    codec = ConvCodec(12, kernel_size=16, stride=8)
    with torch.no_grad():
        codec.encoder.bias.uniform_(-1, 1)  # even with random bias
        out = codec.encode(torch.randn(2, 400))
    assert float(out.min()) >= 0.0


def test_decode_length_roundtrip():
    codec = ConvCodec(8, kernel_size=16, stride=8)
    feats = torch.zeros(1, 1999, 8)
    wav = codec.decode(feats, 16000)
    assert wav.shape == (1, 16000)
    assert torch.all(wav == 0)


def test_empty_waveform_rejected():
    codec = ConvCodec(8)
    with pytest.raises(CodecError):
        codec.encode(torch.zeros(1, 4))


def test_encode_deterministic():
    codec = ConvCodec(8)
    x = torch.randn(1, 200)
    torch.testing.assert_close(codec.encode(x), codec.encode(x), rtol=0, atol=0)


def test_chunk_layout_examples():
    assert chunk_layout(250, 250) == (1, 0)
    assert chunk_layout(600, 250) == (4, 25)
    assert chunk_layout(1000, 250) == (7, 0)


def test_chunk_odd_size_rejected():
    with pytest.raises(CodecError):
        chunk_layout(100, 249)
    with pytest.raises(CodecError):
        chunk_layout(100, 0)


def test_chunk_roundtrip_exact():
    torch.manual_seed(0)
    x = torch.randn(1000, 6)
    grid = segment_chunks(x, 250)
    assert grid.values.shape == (7, 250, 6)
    back = overlap_add(grid)
    assert float((back - x).abs().max()) <= 1e-6


def test_chunk_roundtrip_with_padding_and_batch():
    torch.manual_seed(1)
    x = torch.randn(3, 613, 4)
    grid = segment_chunks(x, 50)
    back = overlap_add(grid)
    assert back.shape == x.shape
    assert float((back - x).abs().max()) <= 1e-6


def test_chunk_roundtrip_many_lengths():
    for n in (250, 251, 374, 375, 500):
        x = torch.randn(n, 3)
        back = overlap_add(segment_chunks(x, 250))
        assert back.shape == x.shape
        assert float((back - x).abs().max()) <= 1e-6


def test_autoencoder_identity_fit_reaches_20db():
    # joint encoder/decoder training on a reconstruction task
    torch.manual_seed(5)
    codec = ConvCodec(32, kernel_size=16, stride=8)
    t = np.arange(2000) / 8000.0
    signals = np.stack([
        0.6 * np.sin(2 * np.pi * 440 * t) + 0.3 * np.sin(2 * np.pi * 950 * t),
        0.5 * np.sin(2 * np.pi * 233 * t) + 0.2 * np.sin(2 * np.pi * 1500 * t + 0.7),
    ]).astype(np.float32)
    batch = torch.from_numpy(signals)
    opt = torch.optim.Adam(codec.parameters(), lr=2e-3)
    for _ in range(300):
        recon = codec.decode(codec.encode(batch), batch.shape[-1])
        loss = ((recon - batch) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
    with torch.no_grad():
        recon = codec.decode(codec.encode(batch), batch.shape[-1])
    for i in range(2):
        assert snr(signals[i], recon[i].numpy()) >= 20.0
