// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reversible normalization for time-series forecasting.
//!
//! Modules build on one another: [`data`] loads, cleans and splits series;
//! [`normalization`] maps look-back windows to and from a normalized frame;
//! [`forecaster`] holds the linear models and Adam; [`training`] wires them
//! into a pipeline; [`shift`] measures distribution shift between splits;
//! [`experiment`] and [`report`] run configured grids and render their tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod experiment;
pub mod forecaster;
pub mod normalization;
pub mod report;
pub mod shift;
pub mod synthetic;
pub mod training;

pub use data::{DataError, SplitName, TimeSeriesDataset, WindowPair, WindowSpec};
pub use forecaster::{ForecastError, ForecasterKind, LinearForecaster};
pub use normalization::{NormError, NormKind, NormStrategy};
pub use training::{BpSpace, TrainConfig, TrainError};
