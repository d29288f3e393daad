from .api import (
    InstancePoseGrad,
    InstanceRenderGrads,
    ParamGrads,
    RenderAdjoints,
    RenderOutput,
    project_gaussian,
    render,
    render_arrays,
    render_arrays_backward,
    render_backward,
    render_instance_view,
    render_instance_view_backward,
)
from .backend import active_name, has_compiled, use_backend

__all__ = [
    "InstancePoseGrad",
    "InstanceRenderGrads",
    "ParamGrads",
    "RenderAdjoints",
    "RenderOutput",
    "active_name",
    "has_compiled",
    "project_gaussian",
    "render",
    "render_arrays",
    "render_arrays_backward",
    "render_backward",
    "render_instance_view",
    "render_instance_view_backward",
    "use_backend",
]
