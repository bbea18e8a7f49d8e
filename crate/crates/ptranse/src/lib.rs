//! Knowledge-graph embeddings that treat relation paths as translations.
//!
//! Entities and relations live in the same k-dimensional space; a direct
//! fact (h, r, t) is scored by the translation energy ‖h + r − t‖, and a
//! multi-step relation path between the same pair is composed into a single
//! vector (by addition, elementwise multiplication, or a recurrent cell)
//! and scored against the direct relation by ‖p − r‖. Paths are weighted by
//! a flow-based reliability measure, so unreliable connections contribute
//! little to either training or prediction.
//!
//! The pipeline has four stages, each a CLI subcommand and a library call:
//! ingest a tab-separated triple dataset, mine reliable relation paths,
//! train by margin-ranking SGD, and evaluate link prediction with Mean
//! Rank / Hits@N under raw and filter settings.
//!
//! The `book/` directory of the repository walks through each concept with
//! the same runnable examples that appear below.
//!
//! # Mining reliable paths
//!
//! A unit of resource starts at the head entity and flows along the path,
//! splitting evenly among successors at each step; the amount reaching the
//! tail is the path's reliability:
//!
//! ```
//! use ptranse::kg::KnowledgeGraph;
//! use ptranse::paths::pcra;
//!
//! let g = KnowledgeGraph::from_named(
//!     &[("h", "r1", "e1"), ("h", "r1", "e2"),
//!       ("e1", "r2", "t"), ("e2", "r2", "t"), ("e2", "r2", "u")],
//!     &[], &[]);
//! let resources = pcra(&g, g.entities.id("h").unwrap(), &[0, 1]);
//! let t = g.entities.id("t").unwrap();
//! assert!((resources[&t] - 0.75).abs() < 1e-12);
//! ```
//!
//! # Composing a path into one vector
//!
//! ```
//! use ptranse::compose::{compose, ComposeKind};
//!
//! let path = compose(ComposeKind::Add, None, &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
//! assert_eq!(path, vec![1.0, 1.0]);
//! ```
//!
//! # Training and evaluating end to end
//!
//! ```
//! use ptranse::eval::{evaluate, PathResolver, ScoreMode, Task};
//! use ptranse::kg::KnowledgeGraph;
//! use ptranse::paths::{mine_training_paths, path_relation_confidence};
//! use ptranse::trainer::{train, TrainConfig};
//!
//! let g = KnowledgeGraph::from_named(
//!     &[("a", "r1", "b"), ("b", "r2", "c"), ("a", "r3", "c"),
//!       ("c", "r1", "d"), ("d", "r2", "e"), ("c", "r3", "e")],
//!     &[],
//!     &[("a", "r1", "d")],
//! ).augment_reverse().unwrap();
//! let paths = mine_training_paths(&g, 2, 0.01);
//! let stats = path_relation_confidence(&g, &paths);
//! let cfg = TrainConfig { dim: 8, epochs: 30, learning_rate: 0.01, ..Default::default() };
//! let store = train(&g, &paths, &cfg, None).unwrap();
//! let resolver = PathResolver::new(&g, &paths, 2, 0.01);
//! let report = evaluate(&store, &g, &resolver, &stats, Task::Relation,
//!                       ScoreMode::Ptranse, 500).unwrap();
//! assert!(report.mean_rank_filter >= 1.0);
//! ```

pub mod compose;
pub mod error;
pub mod eval;
pub mod kg;
pub mod model;
pub mod paths;
pub mod trainer;

pub use error::{Error, Result};
