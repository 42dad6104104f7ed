//! Executable toolkit for testing aspect-oriented programs: a miniature
//! program model, a pointcut language and matcher, a weaving interpreter
//! producing traces, adequacy obligations, and mutation analysis.

mod lex;

pub mod adequacy;
pub mod aspect;
pub mod matcher;
pub mod interp;
pub mod model;
pub mod mutation;
pub mod pointcut;
pub mod scenario;
pub mod trace;
