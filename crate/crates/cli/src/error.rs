use std::fmt;
use std::process::ExitCode;

use serde_json::json;
use wiscon_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Runtime,
}

impl Category {
    pub fn code(self) -> u8 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Runtime => 4,
        }
    }

    fn kind(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Data => "data",
            Category::Runtime => "runtime",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            category: Category::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl fmt::Display) -> Self {
        Self {
            category: Category::Data,
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl fmt::Display) -> Self {
        Self {
            category: Category::Runtime,
            message: message.to_string(),
        }
    }

    /// Errors raised while reading or generating the input data. I/O here is
    /// a data problem rather than a runtime one.
    pub fn loading(e: Error) -> Self {
        match classify(&e) {
            Category::Runtime => Self::data(e),
            c => Self {
                category: c,
                message: e.to_string(),
            },
        }
    }

    pub fn report(&self) -> ExitCode {
        let body = json!({"error": {"kind": self.category.kind(), "message": self.message, "exit_code": self.category.code()}});
        eprintln!("{body}");
        ExitCode::from(self.category.code())
    }
}

fn classify(e: &Error) -> Category {
    match e {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::BudgetExceedsPool { .. }
        | Error::InfeasibleSpec(_)
        | Error::InfeasibleFraction(_)
        | Error::InvalidContext(_)
        | Error::EmptyContext => Category::Config,
        Error::NonFiniteValue { .. }
        | Error::LabelLengthMismatch { .. }
        | Error::LabelDomain { .. }
        | Error::EmptyDataset
        | Error::Ragged { .. }
        | Error::MissingLabels
        | Error::DegenerateClass { .. }
        | Error::SingleClass
        | Error::DimensionTooLarge { .. }
        | Error::DimensionTooSmall { .. }
        | Error::RankDeficient { .. }
        | Error::DimensionMismatch { .. }
        | Error::Parse { .. }
        | Error::MissingColumn(_)
        | Error::Csv(_) => Category::Data,
        _ => Category::Runtime,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            category: classify(&e),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::runtime(e)
    }
}
