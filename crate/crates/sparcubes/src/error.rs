use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: unsupported mesh format {ext:?}")]
    UnsupportedFormat { path: PathBuf, ext: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("mesh has no faces after validation")]
    EmptyMesh,

    #[error("mesh bounding box has zero extent")]
    DegenerateBounds,

    #[error("no active voxels at resolution {resolution}")]
    EmptyActiveSet { resolution: u32 },

    #[error("sparcubes grid data: {0}")]
    GridFormat(String),

    #[error("grid references a missing corner (index {0})")]
    MissingCorner(u64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate camera: {0}")]
    Camera(String),

    #[error("image size mismatch: {0}x{1} vs {2}x{3}")]
    ImageSize(u32, u32, u32, u32),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
