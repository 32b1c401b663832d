from .config import ExtractorConfig  # noqa: F401
from .pipeline import (  # noqa: F401
    FeatureBundle,
    ModalityProjector,
    RawFeatures,
    assemble_bundle,
    extract_bundle,
    extract_captions,
    extract_image,
    extract_ocr,
    extract_raw_features,
    extract_rois,
    extract_symbols,
    split_bundle,
)
from .ports import (  # noqa: F401
    Detection,
    ExtractorSuite,
    StubCaptioner,
    StubImageEncoder,
    StubObjectDetector,
    StubSymbolClassifier,
    StubTextEncoder,
    stub_suite,
)
from .cache import FeatureCache  # noqa: F401
