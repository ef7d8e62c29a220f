pub mod base_control;
pub mod frames;
pub mod harness;
pub mod mapping;
pub mod planner;
pub mod swerve;
pub mod manip;
pub mod sim;
pub mod bus;
