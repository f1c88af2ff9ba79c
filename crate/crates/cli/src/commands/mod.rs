pub mod accuracy;
pub mod distance;
pub mod gen_data;
pub mod train_hsd;
pub mod usage;
