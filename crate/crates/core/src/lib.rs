pub mod action;
pub mod artifacts;
pub mod chat;
pub mod dataset_out;
pub mod elicitation;
pub mod emulator;
pub mod env_model;
pub mod eval;
pub mod goals;
pub mod llm_client;
pub mod masking;
pub mod mock_server;
pub mod oracle;
pub mod plan_io;
pub mod scenario_gen;
pub mod trace;
pub mod util;

pub use action::{ActionCall, ActionName, Dialect};
pub use chat::{ChatMessage, ChatMessages, Role};
pub use emulator::{ObservationDelta, WorldState};
pub use env_model::{Environment, NodeKind, ObjectSetEnv, SceneGraph};
pub use goals::GoalSpec;
pub use llm_client::{ChatBackend, Completion, LlmError, RequestContext};
pub use masking::MaskedEnvironment;
pub use plan_io::{ParseError, PlannerResponse};
pub use scenario_gen::{Scenario, Specification, Task};
