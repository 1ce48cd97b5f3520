use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("value {value} is not an element of Z_{p}")]
    NotInField { value: u64, p: u64 },
    #[error("coefficient index {index} leaves the field: index + 1 must be below p = {p}")]
    IndexOutOfField { index: u64, p: u64 },
    #[error("at least one random seed value is required")]
    EmptySeeds,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PermutationError {
    #[error("permutation domain must contain at least one element")]
    DomainEmpty,
    #[error("rank {rank} is outside the permutation domain [0, {n})")]
    RankOutOfRange { rank: u64, n: u64 },
    #[error("cycle walking did not return to [0, {n}) within {limit} steps")]
    CycleWalkExhausted { n: u64, limit: u32 },
    #[error("at least one Feistel round is required")]
    NoRounds,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("device has active interference sources; quiesce before recording")]
    NotQuiesced,
    #[error("unsupported checkpoint format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("live region has {live} words but the checkpoint has {recorded}")]
    SizeMismatch { live: usize, recorded: usize },
    #[error("memory image must contain at least one word")]
    EmptyImage,
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("checkpoint data truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("slack ranges overlap at word {0}")]
    RangeOverlap(usize),
    #[error("slack range {start}..{end} exceeds image of {len} words")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChallengeError {
    #[error("memory image is empty")]
    EmptyImage,
    #[error("pass count must be at least 1")]
    NoPasses,
    #[error("{passes} passes over {words} words exceed the coefficient range of p = {p}")]
    SpecOutOfField { passes: u32, words: u64, p: u64 },
    #[error("permutation covers {perm} indices but the image has {words} words")]
    PermutationDomainMismatch { perm: u64, words: u64 },
    #[error("naive oracle supports at most {max} words, got {words}")]
    OracleTooLarge { words: u64, max: u64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Permutation(#[from] PermutationError),
}

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("tier table has no entry for {0}")]
    UnknownTier(String),
    #[error("invalid device configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Challenge(#[from] ChallengeError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("series has zero spread; the statistic is undefined")]
    DegenerateSeries,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no decision after {0} challenges")]
    MaxTrialsExceeded(u32),
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("channel timed out waiting for the device")]
    ChannelTimeout,
    #[error("response for session {got:#x} does not match outstanding session {expected:#x}")]
    SessionMismatch { expected: u64, got: u64 },
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unexpected message: expected {expected}, got {got}")]
    UnexpectedMessage { expected: &'static str, got: &'static str },
    #[error("device reported failure status {0}")]
    DeviceFailure(u8),
    #[error("channel closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}
