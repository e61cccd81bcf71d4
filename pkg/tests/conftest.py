import pytest

from chipletnoi.platform import SystemConfig, build_platform
from chipletnoi.traffic import default_mapping, generate_trace
from chipletnoi.workload import MODEL_PRESETS, ModelSpec, SequenceConfig


def tiny_model(**overrides) -> ModelSpec:
    base = dict(name="tiny", block_structure="encoder-only", d_model=8,
                num_layers=1, num_heads=2)
    base.update(overrides)
    return ModelSpec(**base)


@pytest.fixture(scope="session")
def platform36():
    return build_platform(SystemConfig(total_chiplets=36))


@pytest.fixture(scope="session")
def platform11():
    return build_platform(SystemConfig(total_chiplets=11))


@pytest.fixture(scope="session")
def bert_base_trace(platform36):
    model = MODEL_PRESETS["BERT-Base"]
    mapping = default_mapping(platform36, model)
    return generate_trace(platform36, platform36.canonical_placement(),
                          mapping, model, SequenceConfig(128))


@pytest.fixture(scope="session")
def tiny_trace(platform11):
    model = tiny_model()
    mapping = default_mapping(platform11, model)
    return generate_trace(platform11, platform11.canonical_placement(),
                          mapping, model, SequenceConfig(4))
