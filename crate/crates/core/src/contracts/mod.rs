//! Tool contracts: schemas, the scope lattice, capability tokens, and the
//! pure validation and authorization functions that turn proposals into
//! typed, permitted calls or structured refusals.

mod authorize;
mod call;
mod logged;
mod schema;
mod scope;
mod spec;
mod token;
mod validate;

pub use authorize::{authorize, dry_run_authorize};
pub use logged::{authorize_logged, validate_logged};
pub use call::{ErrorCode, Permit, ToolCall, ValidatedCall, ValidationError};
pub use schema::{check_schema, field_at, FieldKind, FieldSchema};
pub use scope::{scope_leq, ToolScope};
pub use spec::{RateLimit, RegistryError, ToolRegistry, ToolSpec};
pub use token::{pattern_matches, CapabilityToken, ParamCap};
pub use validate::{validate_args, validate_args_with};
