/// Errors produced by the solver layer. Core-algebra errors pass through.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] cshv_core::Error),

    #[error("grid: {0}")]
    Grid(String),

    #[error("config: {0}")]
    Config(String),

    #[error("vortex outside domain: component {component}, point {index} at ({x}, {y})")]
    VortexOutsideDomain {
        component: usize,
        index: usize,
        x: f64,
        y: f64,
    },

    /// The zero-field limit start requires lambda strictly above the listed
    /// threshold; below it no admissible state of that form exists.
    #[error(
        "initial guess infeasible: lambda = {lambda} must exceed max_i 4 n b_i / |domain| = {threshold}"
    )]
    InitInfeasible { lambda: f64, threshold: f64 },

    #[error("initial guess failed: {0}")]
    InitFailed(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
