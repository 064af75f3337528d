pub mod audio;
pub mod features;
pub mod mixer;
pub mod placement;
pub mod sonify;
pub mod viz;
