//! Multi-sensor surveillance with T-step-ahead detection planning.
//!
//! Targets leave sources outside a rectangular zone at Poisson rate, along
//! straight lines at a common speed. Mobile sensors sit on the cells of a
//! lattice covering the zone and see every target inside a square field of
//! view. Each planning round a sensor scores every (cell, step) node it can
//! reach within `T` steps by the detections it expects there, blending the
//! targets it currently sees with offline per-cell arrival statistics, and
//! picks the best path through the nine-connected space-time tree. Sensors
//! are then ranked by their best score and lower-ranked sensors re-plan with
//! values discounted where their view would overlap a higher-ranked plan.
//!
//! - [`geometry`]: lattice, FOV squares, angular spans, chords, overlaps
//! - [`stats`]: offline per-cell arrival rates and escape-time CDFs
//! - [`estimator`]: expected detections per space-time node
//! - [`planner`]: best paths and the priority coordination round
//! - [`sim`]: the discrete-time world and metrics
//! - [`config`], [`harness`]: scenario files and CLI commands

pub mod config;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod stats;
