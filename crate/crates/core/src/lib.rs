pub mod bufferignorant;
pub mod error;
pub mod linalg;
pub mod model;
pub mod par;
pub mod sim;
pub mod solver;
pub mod statetree;
pub mod strategies;
pub mod policy_file;
pub mod verify;
