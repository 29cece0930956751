//! Axum/hyper binding: adapts HTTP requests to the service's request type
//! and serves it over TLS (or plain HTTP when explicitly configured).

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::extract::State;
use axum::http::{HeaderValue, Request, StatusCode};
use axum::response::Response;
use axum::Router;
use metarest_core::config::ServerConfig;
use metarest_core::router::{ApiRequest, Method};
use metarest_core::service::Service;

const MAX_BODY_BYTES: usize = 16 * 1024 * 1024;

pub fn serve(config: ServerConfig, service: Service) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve_async(config, service))
}

async fn serve_async(config: ServerConfig, service: Service) -> anyhow::Result<()> {
    let addr: SocketAddr = format!("{}:{}", config.bind_address, config.port).parse()?;
    let app = app(Arc::new(service));
    match &config.tls {
        Some(tls) => {
            // Select the TLS crypto backend explicitly; rustls refuses to
            // guess when multiple providers are compiled in.
            let _ = rustls::crypto::ring::default_provider().install_default();
            let tls_config = axum_server::tls_rustls::RustlsConfig::from_pem_file(
                &tls.cert_path,
                &tls.key_path,
            )
            .await?;
            eprintln!("listening on https://{addr}");
            axum_server::bind_rustls(addr, tls_config)
                .serve(app.into_make_service())
                .await?;
        }
        None => {
            eprintln!("listening on http://{addr} (TLS disabled)");
            axum_server::bind(addr)
                .serve(app.into_make_service())
                .await?;
        }
    }
    Ok(())
}

pub fn app(service: Arc<Service>) -> Router {
    Router::new()
        .fallback(dispatch)
        .with_state(service)
}

#[axum::debug_handler]
async fn dispatch(State(service): State<Arc<Service>>, request: Request<Body>) -> Response {
    let Some(method) = Method::parse(request.method().as_str()) else {
        return plain_response(
            StatusCode::METHOD_NOT_ALLOWED,
            &[("Allow", "GET, PUT, POST, DELETE, HEAD, OPTIONS")],
        );
    };
    let uri = request.uri().clone();
    fn header(request: &Request<Body>, name: &str) -> Option<String> {
        request
            .headers()
            .get(name)
            .and_then(|v| v.to_str().ok())
            .map(String::from)
    }
    let accept = header(&request, "accept");
    let content_type = header(&request, "content-type");
    let authorization = header(&request, "authorization");
    let origin = header(&request, "origin");
    let body = match to_bytes(request.into_body(), MAX_BODY_BYTES).await {
        Ok(bytes) => bytes.to_vec(),
        Err(_) => return plain_response(StatusCode::PAYLOAD_TOO_LARGE, &[]),
    };

    let mut api_request = ApiRequest::new(method, uri.path());
    api_request.query = uri.query().map(String::from);
    api_request.accept = accept;
    api_request.content_type = content_type;
    api_request.authorization = authorization;
    api_request.origin = origin;
    api_request.body = body;

    let api_response = service.handle(&api_request);
    let mut builder = Response::builder().status(api_response.status);
    for (name, value) in &api_response.headers {
        builder = builder.header(name, value);
    }
    builder
        .body(Body::from(api_response.body))
        .unwrap_or_else(|_| plain_response(StatusCode::INTERNAL_SERVER_ERROR, &[]))
}

fn plain_response(status: StatusCode, headers: &[(&str, &str)]) -> Response {
    let mut response = Response::new(Body::empty());
    *response.status_mut() = status;
    for (name, value) in headers {
        response.headers_mut().insert(
            axum::http::header::HeaderName::from_bytes(name.as_bytes()).unwrap(),
            HeaderValue::from_str(value).unwrap(),
        );
    }
    response
}
