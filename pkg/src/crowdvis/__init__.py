"""crowdvis: interactive visibility management for crowded segmented volumes.

Instances are grouped by attribute-range predicates, each group is sparsified
with view-dependent importance functions, and the result renders through a
per-voxel 2D visibility mask blended with the raw data. Screen-space
assessment of what actually made it to the image closes the loop.
"""

from .assess import GroupVisibilityReport, assess_visibility
from .grouping import (
    GroupAssignment,
    HierarchyNode,
    LinearPredicate,
    RangeEntry,
    RangeSet,
    assign_groups,
    cascade_down,
    cascade_up,
    default_color,
    group_histogram,
    linearize,
)
from .mask import (
    TransferFunction2D,
    VisibilityMask,
    build_transfer_function,
    build_visibility_mask,
    mask_value,
    sample_mask_classified,
)
from .render import (
    BlendWeights,
    Camera,
    FrameSet,
    RawTransferFunction,
    RenderOptions,
    classify_sample,
    fit_camera,
    render_frame,
    render_id_only,
)
from .service import Session, create_app
from .sparsify import (
    ImportanceTable,
    SparsifyParams,
    aggregate_importance,
    importance_context,
    importance_depth,
    importance_uniform,
    sparsify_groups,
)
from .synthetic import SceneSpec, generate_synthetic
from .voldata import (
    AttributeSchema,
    GradientField,
    GridDims,
    InstanceTable,
    RawVolume,
    SegmentationVolume,
    compute_gradients,
    load_dataset,
    save_dataset,
    voxels_of_instance,
)

__version__ = "0.1.0"
