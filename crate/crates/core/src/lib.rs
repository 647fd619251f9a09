pub mod delivery;
pub mod dialog;
pub mod grid;
pub mod harness;
pub mod kb;
pub mod mdp;
pub mod navkb;
pub mod rmax;
pub mod task_model;
