pub mod evaluate;
pub mod generate;
pub mod prepare;
pub mod report;
pub mod serve;
pub mod train;
