//! Core of a metamodel-driven REST server.
//!
//! A metamodel (an Ecore-style class model) is loaded from a JSON or XMI
//! document and bound to model instances stored as containment trees. The
//! instances are then exposed as a RESTful API: URL paths navigate the
//! containment structure, JSON/XML wire representations carry attribute
//! values and cross-reference URIs, OCL invariants from the metamodel
//! annotations gate every mutation, and class-level role annotations drive
//! authorization.

pub mod config;
pub mod ecore;
pub mod instance;
pub mod manifest;
pub mod metamodel;
pub mod ocl;
pub mod repr;
pub mod router;
pub mod sample;
pub mod security;
pub mod service;

pub use instance::{
    load_instance, save_instance, AttrValue, Eid, Element, ModelInstance, RefSlot, ResourcePath,
    Scalar, StorageBinding, StorageFormat,
};
pub use metamodel::{
    parse_metamodel, AttributeDef, ClassDef, DataType, Metamodel, MetamodelError, ReferenceDef,
};
