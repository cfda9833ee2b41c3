from src.metrics.reports import (
    DepthReport,
    S3RReport,
    SemanticReport,
    depth_table,
    render_table,
    reports_to_json,
    s3r_table,
    semantic_table,
)
from src.metrics.evaluation import (
    TARGET_CLASSES,
    SegMetric,
    depth_metrics,
    envelope_error,
    merge_s3r_reports,
    miou,
    s3r_metrics,
    spectrogram_mse,
)
