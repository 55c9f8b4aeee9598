pub mod eval;
pub mod io;
pub mod lp;
pub mod milp;
pub mod model;
pub mod pipeline;
pub mod predictors;
pub mod report;
pub mod splitter;
