import torch

from stylemap.features import RandomConvFeatures


def test_same_seed_same_weights():
    a, b = RandomConvFeatures(seed=17), RandomConvFeatures(seed=17)
    x = torch.randn(2, 3, 16, 16)
    assert torch.equal(a.embed(x), b.embed(x))
    assert not torch.equal(a.embed(x), RandomConvFeatures(seed=18).embed(x))


def test_feature_pyramid_shapes():
    ext = RandomConvFeatures(seed=17, widths=(8, 16, 32))
    feats = ext.features(torch.randn(2, 3, 32, 32))
    assert [f.shape for f in feats] == [
        torch.Size([2, 8, 32, 32]),
        torch.Size([2, 16, 16, 16]),
        torch.Size([2, 32, 8, 8]),
    ]
    assert ext.embed_dim == 56
    assert ext.embed(torch.randn(2, 3, 32, 32)).shape == (2, 56)


def test_extractor_id_encodes_seed_and_depth():
    assert RandomConvFeatures(seed=17).extractor_id == "randconv-3x-seed17"
    assert RandomConvFeatures(seed=3, widths=(4, 8)).extractor_id == "randconv-2x-seed3"


def test_weights_are_frozen():
    ext = RandomConvFeatures(seed=17)
    assert all(not p.requires_grad for p in ext.parameters())


def test_embed_batch_consistency():
    ext = RandomConvFeatures(seed=17)
    x = torch.randn(4, 3, 16, 16)
    full = ext.embed(x)
    parts = torch.cat([ext.embed(x[i : i + 1]) for i in range(4)])
    assert torch.allclose(full, parts, atol=1e-6)
